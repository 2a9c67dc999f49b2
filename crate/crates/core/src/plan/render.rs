//! Frame snapshots of the swarm's roles as text or PPM images.
//!
//! Renderers take one display cell `(column, row)` per agent, row 0 being the
//! bottom of the lattice.

use super::{Color, Role};

#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub tick: u64,
    pub roles: Vec<Role>,
}

/// Display cells whose agent shows `color`.
pub fn lit_cells(roles: &[Role], cells: &[(u32, u32)], color: Color) -> Vec<(u32, u32)> {
    let mut out: Vec<_> =
        roles.iter().zip(cells).filter(|(r, _)| **r == Role::Lit(color)).map(|(_, &c)| c).collect();
    out.sort_unstable();
    out
}

fn extent(cells: &[(u32, u32)]) -> (u32, u32) {
    cells.iter().fold((0, 0), |(w, h), &(c, r)| (w.max(c + 1), h.max(r + 1)))
}

/// `.` is off, a colour letter is lit, a blank is a departed agent or an empty cell.
pub fn render_ascii(roles: &[Role], cells: &[(u32, u32)]) -> String {
    let (w, h) = extent(cells);
    let mut grid = vec![vec![' '; w as usize]; h as usize];
    for (role, &(c, r)) in roles.iter().zip(cells) {
        grid[r as usize][c as usize] = match role {
            Role::Off => '.',
            Role::Lit(color) => color.symbol(),
            Role::Departed => ' ',
        };
    }
    let mut out = String::with_capacity(((w + 1) * h) as usize);
    for row in grid.iter().rev() {
        out.extend(row.iter());
        out.push('\n');
    }
    out
}

const PPM_SCALE: u32 = 8;
const OFF_RGB: [u8; 3] = [40, 40, 40];
const EMPTY_RGB: [u8; 3] = [0, 0, 0];

/// Binary PPM, each display cell drawn as an 8x8 block.
pub fn render_ppm(roles: &[Role], cells: &[(u32, u32)]) -> Vec<u8> {
    let (w, h) = extent(cells);
    let (pw, ph) = (w * PPM_SCALE, h * PPM_SCALE);
    let mut pixels = vec![EMPTY_RGB; (pw * ph) as usize];
    for (role, &(c, r)) in roles.iter().zip(cells) {
        let rgb = match role {
            Role::Off => OFF_RGB,
            Role::Lit(color) => color.rgb(),
            Role::Departed => continue,
        };
        let top = (h - 1 - r) * PPM_SCALE;
        // one-pixel gutter between cells
        for py in top..top + PPM_SCALE - 1 {
            for px in c * PPM_SCALE..(c + 1) * PPM_SCALE - 1 {
                pixels[(py * pw + px) as usize] = rgb;
            }
        }
    }
    let mut out = format!("P6\n{pw} {ph}\n255\n").into_bytes();
    out.extend(pixels.iter().flatten());
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ascii_puts_row_zero_at_the_bottom() {
        let roles = [Role::Lit(Color::Red), Role::Off, Role::Departed, Role::Lit(Color::Blue)];
        let cells = [(0, 0), (1, 0), (0, 1), (1, 1)];
        assert_eq!(render_ascii(&roles, &cells), " B\nR.\n");
    }

    #[test]
    fn ppm_header_and_size() {
        let roles = [Role::Off; 6];
        let cells: Vec<_> = (0..3).flat_map(|c| (0..2).map(move |r| (c, r))).collect();
        let ppm = render_ppm(&roles, &cells);
        let header = b"P6\n24 16\n255\n";
        assert!(ppm.starts_with(header));
        assert_eq!(ppm.len(), header.len() + 24 * 16 * 3);
    }

    #[test]
    fn lit_cells_filters_by_colour() {
        let roles = [Role::Lit(Color::Red), Role::Lit(Color::Green), Role::Lit(Color::Red)];
        let cells = [(2, 0), (1, 0), (0, 0)];
        assert_eq!(lit_cells(&roles, &cells, Color::Red), vec![(0, 0), (2, 0)]);
    }
}
