//! Lattice coordinates: the perimeter-count mapping for corner and border
//! agents, swarm dimensions, and neighbour-based inference for interior agents.

use std::fmt;

use super::message::CornerCounts;
use super::ProtocolError;

/// 1-based lattice coordinate. A zero on an axis means that axis is not known yet.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Coord {
    pub x: u16,
    pub y: u16,
}

impl Coord {
    pub const UNASSIGNED: Coord = Coord { x: 0, y: 0 };
    pub const ORIGIN: Coord = Coord { x: 1, y: 1 };

    pub const fn new(x: u16, y: u16) -> Self {
        Coord { x, y }
    }

    pub fn is_complete(self) -> bool {
        self.x != 0 && self.y != 0
    }

    pub fn is_unassigned(self) -> bool {
        self.x == 0 && self.y == 0
    }
}

impl fmt::Display for Coord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.x, self.y)
    }
}

/// Lattice extent as measured by the perimeter count.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SwarmDims {
    pub width: u16,
    pub height: u16,
    pub population: u32,
}

/// Maps an agent's position along the perimeter walk to its coordinate.
///
/// `corners` are the local counts of the first, second and third corner met
/// by the walk that leaves the origin along the x axis.
pub fn corner_border_coords(my_count: u16, corners: CornerCounts) -> Result<Coord, ProtocolError> {
    let [c1, c2, c3] = corners.map(i32::from);
    let n = i32::from(my_count);
    if n < 1 || !(c1 < c2 && c2 < c3) {
        return Err(ProtocolError::CountInconsistent);
    }
    let (x, y) = if n <= c1 {
        (n, 1)
    } else if n <= c2 {
        (c1, n - c1 + 1)
    } else if n <= c3 {
        (c1 + c2 - n, c2 - c1 + 1)
    } else {
        (1, c2 + c3 - c1 - n + 1)
    };
    if !(1..=c1).contains(&x) || !(1..=c2 - c1 + 1).contains(&y) {
        return Err(ProtocolError::CountInconsistent);
    }
    Ok(Coord::new(x as u16, y as u16))
}

/// Width, height and head count from the corner counts and the full perimeter length.
pub fn swarm_dimensions(corners: CornerCounts, total_count: u16) -> Result<SwarmDims, ProtocolError> {
    let [c1, c2, c3] = corners.map(u32::from);
    let total = u32::from(total_count);
    if c1 == 0 || c2 < c1 || c3 < c2 {
        return Err(ProtocolError::CountInconsistent);
    }
    let width = c1;
    let height = c2 - c1 + 1;
    if c3 - c2 + 1 != width || total + 4 != 2 * (width + height) {
        return Err(ProtocolError::CountInconsistent);
    }
    Ok(SwarmDims { width: width as u16, height: height as u16, population: width * height })
}

/// Axis values an interior agent can deduce from (possibly partial) neighbour coordinates.
///
/// An axis is set to `v` when neighbours report the three values `v-1`, `v`,
/// `v+1` on it. More than one such triple on an axis is contradictory and
/// yields nothing for that axis.
pub fn infer_middle_coord(neighbor_coords: &[Coord]) -> (Option<u16>, Option<u16>) {
    let xs: Vec<u16> = neighbor_coords.iter().map(|c| c.x).collect();
    let ys: Vec<u16> = neighbor_coords.iter().map(|c| c.y).collect();
    (consecutive_centre(&xs), consecutive_centre(&ys))
}

fn consecutive_centre(values: &[u16]) -> Option<u16> {
    let mut seen: Vec<u16> = values.iter().copied().filter(|&v| v != 0).collect();
    seen.sort_unstable();
    seen.dedup();
    let mut centres = seen.windows(3).filter(|w| w[0] + 1 == w[1] && w[1] + 1 == w[2]).map(|w| w[1]);
    let first = centres.next()?;
    match centres.next() {
        None => Some(first),
        Some(_) => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perimeter_examples_on_five_by_five() {
        let corners = [5, 9, 13];
        assert_eq!(corner_border_coords(3, corners), Ok(Coord::new(3, 1)));
        assert_eq!(corner_border_coords(10, corners), Ok(Coord::new(4, 5)));
        assert_eq!(corner_border_coords(1, corners), Ok(Coord::ORIGIN));
        assert_eq!(corner_border_coords(16, corners), Ok(Coord::new(1, 2)));
    }

    #[test]
    fn out_of_range_count_is_inconsistent() {
        // two steps past the origin
        assert_eq!(corner_border_coords(18, [5, 9, 13]), Err(ProtocolError::CountInconsistent));
        assert_eq!(corner_border_coords(0, [5, 9, 13]), Err(ProtocolError::CountInconsistent));
        assert_eq!(corner_border_coords(2, [5, 5, 13]), Err(ProtocolError::CountInconsistent));
    }

    #[test]
    fn dimension_examples() {
        let d = swarm_dimensions([5, 9, 13], 16).unwrap();
        assert_eq!((d.width, d.height, d.population), (5, 5, 25));
        let d = swarm_dimensions([25, 32, 56], 62).unwrap();
        assert_eq!((d.width, d.height, d.population), (25, 8, 200));
        let d = swarm_dimensions([3, 5, 7], 8).unwrap();
        assert_eq!((d.width, d.height, d.population), (3, 3, 9));
        assert_eq!(swarm_dimensions([5, 9, 12], 16), Err(ProtocolError::CountInconsistent));
        assert_eq!(swarm_dimensions([5, 9, 13], 17), Err(ProtocolError::CountInconsistent));
    }

    #[test]
    fn middle_inference_examples() {
        let c = |x, y| Coord::new(x, y);
        assert_eq!(infer_middle_coord(&[c(3, 7), c(4, 7), c(5, 7)]), (Some(4), None));
        assert_eq!(infer_middle_coord(&[c(3, 7), c(3, 8), c(5, 9)]), (None, Some(8)));
        assert_eq!(infer_middle_coord(&[c(3, 7), c(5, 7)]), (None, None));
    }

    #[test]
    fn partial_coords_contribute_their_known_axis() {
        let c = |x, y| Coord::new(x, y);
        assert_eq!(infer_middle_coord(&[c(2, 0), c(0, 4), c(3, 0), c(4, 0)]), (Some(3), None));
        assert_eq!(infer_middle_coord(&[c(0, 4), c(0, 5), c(0, 6), c(1, 0)]), (None, Some(5)));
    }

    #[test]
    fn duplicates_do_not_count_as_distinct_values() {
        let c = |x, y| Coord::new(x, y);
        assert_eq!(infer_middle_coord(&[c(4, 1), c(4, 2), c(5, 3)]), (None, Some(2)));
    }

    #[test]
    fn ambiguous_triples_yield_nothing() {
        let c = |x, y| Coord::new(x, y);
        assert_eq!(infer_middle_coord(&[c(3, 1), c(4, 1), c(5, 1), c(6, 1)]), (None, None));
    }
}
