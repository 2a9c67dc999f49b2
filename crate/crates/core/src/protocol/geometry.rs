//! Neighbourhood radius and the spacing limits under which a range-only
//! filter can still isolate the Moore neighbourhood.

use super::ProtocolError;

/// Estimates below this are treated as sensor errors (one Kilobot body length).
pub const ROBOT_BODY_LENGTH_MM: f64 = 33.0;

/// Filtering radius derived from the shortest neighbour distance seen.
pub fn neighborhood_radius(min_dist_mm: f64) -> f64 {
    1.5 * min_dist_mm + 10.0
}

/// Largest admissible long spacing for short spacing `x` under placement/sensing error `eps`.
///
/// The diagonal of the error-inflated cell must stay shorter than twice the
/// error-deflated short side.
pub fn max_long_spacing(x: f64, eps: f64) -> Result<f64, ProtocolError> {
    let numerator = 3.0 * eps * eps - 10.0 * eps + 3.0;
    if !(eps >= 0.0) || numerator <= 0.0 {
        return Err(ProtocolError::EpsOutOfRange(eps));
    }
    Ok(x * numerator.sqrt() / (eps * eps + 2.0 * eps + 1.0).sqrt())
}

/// True iff a rectangular lattice with spacings `x`, `y` keeps its Moore
/// neighbourhood separable at error level `eps`. Argument order is free.
pub fn spacing_feasible(x: f64, y: f64, eps: f64) -> Result<bool, ProtocolError> {
    let (short, long) = if x <= y { (x, y) } else { (y, x) };
    if short <= 0.0 {
        return Ok(false);
    }
    Ok(long < max_long_spacing(short, eps)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn radius_examples() {
        assert_relative_eq!(neighborhood_radius(33.0), 59.5);
        assert_relative_eq!(neighborhood_radius(70.0), 115.0);
        assert_relative_eq!(neighborhood_radius(110.0), 175.0);
    }

    #[test]
    fn feasibility_examples() {
        assert!(spacing_feasible(50.0, 50.0, 0.0).unwrap());
        assert!(!spacing_feasible(50.0, 50.0 * 3f64.sqrt(), 0.0).unwrap());
        assert!(spacing_feasible(50.0, 64.0, 0.1).unwrap());
        assert!(!spacing_feasible(50.0, 65.0, 0.1).unwrap());
        // swapped arguments
        assert!(spacing_feasible(64.0, 50.0, 0.1).unwrap());
    }

    #[test]
    fn bound_at_eps_point_one() {
        let b = max_long_spacing(50.0, 0.1).unwrap();
        assert_relative_eq!(b, 50.0 * 2.03f64.sqrt() / 1.1, max_relative = 1e-12);
        assert!((b - 64.76).abs() < 0.01);
    }

    #[test]
    fn eps_domain() {
        assert!(max_long_spacing(50.0, 0.3).is_ok());
        assert_eq!(max_long_spacing(50.0, 0.35), Err(ProtocolError::EpsOutOfRange(0.35)));
        assert!(max_long_spacing(50.0, -0.1).is_err());
        assert!(max_long_spacing(50.0, f64::NAN).is_err());
        // root of 3e^2 - 10e + 3
        let root = (10.0 - 64f64.sqrt()) / 6.0;
        assert!(max_long_spacing(50.0, root + 1e-9).is_err());
        assert!(max_long_spacing(50.0, root - 1e-6).is_ok());
    }
}
