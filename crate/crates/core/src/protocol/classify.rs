use super::ProtocolError;

/// Where an agent sits in the lattice, judged from neighbour counts alone.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PositionGroup {
    #[default]
    Unknown,
    Corner,
    Border,
    Middle,
}

impl PositionGroup {
    pub fn code(self) -> u8 {
        match self {
            PositionGroup::Unknown => 0,
            PositionGroup::Corner => 1,
            PositionGroup::Border => 2,
            PositionGroup::Middle => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => PositionGroup::Unknown,
            1 => PositionGroup::Corner,
            2 => PositionGroup::Border,
            3 => PositionGroup::Middle,
            _ => return None,
        })
    }

    /// Corners and borders take part in the perimeter count.
    pub fn is_perimeter(self) -> bool {
        matches!(self, PositionGroup::Corner | PositionGroup::Border)
    }
}

/// Corner if strictly fewer neighbours than every neighbour, middle if at
/// least as many as every neighbour, border otherwise.
pub fn classify_position(my_count: u16, neighbor_counts: &[u16]) -> Result<PositionGroup, ProtocolError> {
    let (Some(&min), Some(&max)) = (neighbor_counts.iter().min(), neighbor_counts.iter().max()) else {
        return Err(ProtocolError::Isolated);
    };
    Ok(if my_count < min {
        PositionGroup::Corner
    } else if my_count >= max {
        PositionGroup::Middle
    } else {
        PositionGroup::Border
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rectangular_examples() {
        assert_eq!(classify_position(3, &[5, 5, 8]), Ok(PositionGroup::Corner));
        assert_eq!(classify_position(5, &[3, 5, 8, 8, 8]), Ok(PositionGroup::Border));
        assert_eq!(classify_position(8, &[5, 5, 5, 8, 8, 8, 8, 8]), Ok(PositionGroup::Middle));
    }

    #[test]
    fn isolated_agent_faults() {
        assert_eq!(classify_position(0, &[]), Err(ProtocolError::Isolated));
    }

    #[test]
    fn codes_round_trip() {
        for g in [PositionGroup::Unknown, PositionGroup::Corner, PositionGroup::Border, PositionGroup::Middle] {
            assert_eq!(PositionGroup::from_code(g.code()), Some(g));
        }
        assert_eq!(PositionGroup::from_code(4), None);
    }
}
