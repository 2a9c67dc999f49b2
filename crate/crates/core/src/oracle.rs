//! Independent brute-force references for the closed-form parts of the
//! protocol: the perimeter walk, interior coordinate closure and the
//! spacing/radius geometry.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::protocol::{infer_middle_coord, max_long_spacing, neighborhood_radius, Coord, CornerCounts, ProtocolError};

/// Perimeter of an `m x n` lattice in walk order: out of (1,1) along x,
/// then up, back along the top row and down the first column.
pub fn perimeter_walk(m: u16, n: u16) -> Vec<Coord> {
    let mut walk = Vec::new();
    walk.extend((1..=m).map(|x| Coord::new(x, 1)));
    walk.extend((2..=n).map(|y| Coord::new(m, y)));
    walk.extend((1..m).rev().map(|x| Coord::new(x, n)));
    walk.extend((2..n).rev().map(|y| Coord::new(1, y)));
    walk
}

/// Local counts of the three corners after the origin, read off the walk.
pub fn walk_corner_counts(m: u16, n: u16) -> CornerCounts {
    let walk = perimeter_walk(m, n);
    let pos = |c: Coord| walk.iter().position(|&w| w == c).expect("corner on perimeter") as u16 + 1;
    [pos(Coord::new(m, 1)), pos(Coord::new(m, n)), pos(Coord::new(1, n))]
}

#[derive(Clone, Debug, PartialEq)]
pub struct PerimeterFailure {
    pub dims: (u16, u16),
    pub count: u16,
    pub expected: Coord,
    pub got: Result<Coord, ProtocolError>,
}

/// Checks `coords_fn` against the walk for every lattice from 3x3 up to
/// `max_m x max_n`. Returns the number of lattices checked.
pub fn perimeter_suite<F>(max_m: u16, max_n: u16, coords_fn: F) -> Result<usize, PerimeterFailure>
where
    F: Fn(u16, CornerCounts) -> Result<Coord, ProtocolError>,
{
    let mut lattices = 0;
    for m in 3..=max_m {
        for n in 3..=max_n {
            let corners = walk_corner_counts(m, n);
            for (i, &expected) in perimeter_walk(m, n).iter().enumerate() {
                let count = i as u16 + 1;
                let got = coords_fn(count, corners);
                if got != Ok(expected) {
                    return Err(PerimeterFailure { dims: (m, n), count, expected, got });
                }
            }
            lattices += 1;
        }
    }
    Ok(lattices)
}

/// Fills interior coordinates of an `m x n` lattice by repeated neighbour
/// inference, starting from the perimeter alone. Partial coordinates are
/// visible to neighbours, as on the air. Returns the grid (row-major from
/// y = 1) and the number of sweeps until nothing changed.
pub fn middle_closure(m: u16, n: u16) -> (Vec<Coord>, usize) {
    let (w, h) = (usize::from(m), usize::from(n));
    let at = |x: usize, y: usize| (y - 1) * w + (x - 1);
    let mut grid = vec![Coord::UNASSIGNED; w * h];
    for c in perimeter_walk(m, n) {
        grid[at(usize::from(c.x), usize::from(c.y))] = c;
    }
    let mut sweeps = 0;
    loop {
        sweeps += 1;
        let mut next = grid.clone();
        for y in 2..h {
            for x in 2..w {
                let around: Vec<Coord> = (y - 1..=y + 1)
                    .flat_map(|ny| (x - 1..=x + 1).map(move |nx| (nx, ny)))
                    .filter(|&p| p != (x, y))
                    .map(|(nx, ny)| grid[at(nx, ny)])
                    .collect();
                let (ix, iy) = infer_middle_coord(&around);
                let c = &mut next[at(x, y)];
                if let (0, Some(v)) = (c.x, ix) {
                    c.x = v;
                }
                if let (0, Some(v)) = (c.y, iy) {
                    c.y = v;
                }
            }
        }
        if next == grid {
            return (grid, sweeps);
        }
        grid = next;
    }
}

/// True iff closure reproduces every interior coordinate.
pub fn middle_closure_correct(m: u16, n: u16) -> bool {
    let (grid, _) = middle_closure(m, n);
    grid.iter().enumerate().all(|(i, &c)| {
        let (x, y) = (i % usize::from(m) + 1, i / usize::from(m) + 1);
        c == Coord::new(x as u16, y as u16)
    })
}

/// Closure on `count` seeded random lattices up to `max_m x max_n`; returns the failing dims, if any.
pub fn middle_suite(seed: u64, count: usize, max_m: u16, max_n: u16) -> Result<usize, (u16, u16)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..count {
        let (m, n) = (rng.gen_range(3..=max_m), rng.gen_range(3..=max_n));
        if !middle_closure_correct(m, n) {
            return Err((m, n));
        }
    }
    Ok(count)
}

/// Outcome of the spacing/radius sweep over short spacing `x` and long spacing `y`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RadiusSweep {
    pub grid_points: usize,
    /// `1.5x + 10 < 2x` failed at these `x` (expected empty for `x > 20`).
    pub upper_violations: Vec<f64>,
    /// Points `(x, y)` where the cell diagonal is not inside the radius.
    pub diagonal_violations: Vec<(f64, f64)>,
    /// Largest `y` on the grid, per `x`, for which the diagonal stays inside.
    pub diagonal_limit: Vec<(f64, Option<f64>)>,
    /// `(x, eps)` where the bound failed to decrease with `eps`.
    pub monotone_violations: Vec<(f64, f64)>,
    /// Worst relative deviation of the `eps = 0` bound from `sqrt(3) x`.
    pub eps0_max_rel_err: f64,
}

pub const EPS_SWEEP_STEP: f64 = 0.001;

/// Sweeps `x` over `[x_lo, x_hi]` and `y` over `[x, sqrt(3) x)` on a `step` mm grid.
pub fn radius_sweep(x_lo: f64, x_hi: f64, step: f64) -> RadiusSweep {
    let mut out = RadiusSweep::default();
    let mut xi = 0;
    loop {
        let x = x_lo + f64::from(xi) * step;
        if x > x_hi + 1e-9 {
            break;
        }
        xi += 1;
        let r = neighborhood_radius(x);
        if !(r < 2.0 * x) {
            out.upper_violations.push(x);
        }
        let mut limit = None;
        let mut yi = 0;
        loop {
            let y = x + f64::from(yi) * step;
            if y >= 3f64.sqrt() * x {
                break;
            }
            yi += 1;
            out.grid_points += 1;
            if x.hypot(y) < r {
                limit = Some(y);
            } else {
                out.diagonal_violations.push((x, y));
            }
        }
        out.diagonal_limit.push((x, limit));

        let mut prev = max_long_spacing(x, 0.0).expect("eps 0 is admissible");
        out.eps0_max_rel_err = out.eps0_max_rel_err.max((prev - 3f64.sqrt() * x).abs() / (3f64.sqrt() * x));
        let mut k = 1;
        while let Ok(b) = max_long_spacing(x, f64::from(k) * EPS_SWEEP_STEP) {
            if !(b < prev) {
                out.monotone_violations.push((x, f64::from(k) * EPS_SWEEP_STEP));
            }
            prev = b;
            k += 1;
        }
    }
    out
}

/// Long-spacing bound for each requested `eps`, or the domain error.
pub fn eps_table(x: f64, eps: &[f64]) -> Vec<(f64, Result<f64, ProtocolError>)> {
    eps.iter().map(|&e| (e, max_long_spacing(x, e))).collect()
}
