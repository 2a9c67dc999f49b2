//! Nine-byte broadcast payloads and their bit-exact codec.
//!
//! Byte 0 is the header: the high nibble carries the type tag, the low
//! nibble carries per-type flags. Bytes 1..=8 hold the type's fields,
//! multi-byte integers big-endian. Unused trailing bytes are zero.
//!
//! | tag | type                    | layout (bytes 1..=8)                                    |
//! |-----|-------------------------|---------------------------------------------------------|
//! | 0   | `SR1A_ID`               | id                                                      |
//! | 1   | `SR1A_RELAY`            | id, nonce, relayed id, relayed nonce; flag 0x1 = relay   |
//! | 2   | `SR1B_REPAIR`           | id, up to 7 listed neighbour ids; flags = list length   |
//! | 3   | `SR1C_COUNT`            | id, neighbour count, position group                     |
//! | 4   | `SR2A_TOKEN`            | low 64 token bits; header low nibble = top 4 token bits |
//! | 5   | `SR2A_AXES`             | id, x, y, lowest-id border                              |
//! | 6   | `SR2B_COUNT`            | id, then count,c1,c2,c3 as four packed 14-bit fields    |
//! | 7   | `SR2B_COUNT_NEARCORNER` | same as 6                                               |
//! | 8   | `SR2B_TOTALS`           | id, then total,c1,c2,c3 as four packed 14-bit fields    |
//! | 9   | `SR2C_COORD`            | id, x (u16), y (u16), width and height as 12-bit fields |
//! | 10  | `SYNC`                  | target phase index (u16)                                |

use thiserror::Error;

use super::classify::PositionGroup;
use super::ids::{LocalId, Nonce};

pub const PAYLOAD_LEN: usize = 9;

/// Raw payload as carried by the medium.
pub type Payload = [u8; PAYLOAD_LEN];

/// Largest value a packed 14-bit border-count field can carry.
pub const MAX_BORDER_COUNT: u16 = (1 << 14) - 1;
/// Largest lattice side length carried in a coordinate broadcast.
pub const MAX_DIMENSION: u16 = (1 << 12) - 1;
/// Neighbour ids carried per repair message.
pub const REPAIR_SLOTS: usize = 7;

/// Random election token drawn by corner agents. Only the low
/// [`OriginToken::BITS`] bits are significant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OriginToken(pub u128);

impl OriginToken {
    pub const BITS: u32 = 68;
    pub const MASK: u128 = (1u128 << Self::BITS) - 1;

    pub fn new(raw: u128) -> Self {
        OriginToken(raw & Self::MASK)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
#[repr(u8)]
pub enum MessageKind {
    Sr1aId = 0,
    Sr1aRelay = 1,
    Sr1bRepair = 2,
    Sr1cCount = 3,
    Sr2aToken = 4,
    Sr2aAxes = 5,
    Sr2bCount = 6,
    Sr2bCountNearCorner = 7,
    Sr2bTotals = 8,
    Sr2cCoord = 9,
    Sync = 10,
}

impl MessageKind {
    pub const ALL: [MessageKind; 11] = [
        MessageKind::Sr1aId,
        MessageKind::Sr1aRelay,
        MessageKind::Sr1bRepair,
        MessageKind::Sr1cCount,
        MessageKind::Sr2aToken,
        MessageKind::Sr2aAxes,
        MessageKind::Sr2bCount,
        MessageKind::Sr2bCountNearCorner,
        MessageKind::Sr2bTotals,
        MessageKind::Sr2cCoord,
        MessageKind::Sync,
    ];

    fn from_tag(tag: u8) -> Option<Self> {
        Self::ALL.get(tag as usize).copied()
    }
}

/// The local counts of the three non-origin corners, in traversal order. Zero = not yet set.
pub type CornerCounts = [u16; 3];

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Message {
    Id {
        id: LocalId,
    },
    Relay {
        id: LocalId,
        nonce: Nonce,
        relay: Option<(LocalId, Nonce)>,
    },
    Repair {
        id: LocalId,
        listed: Vec<LocalId>,
    },
    NeighborCount {
        id: LocalId,
        count: u8,
        group: PositionGroup,
    },
    Token {
        token: OriginToken,
    },
    Axes {
        id: LocalId,
        x: u8,
        y: u8,
        lower_id_border: LocalId,
    },
    BorderCount {
        id: LocalId,
        count: u16,
        corners: CornerCounts,
        near_corner: bool,
    },
    Totals {
        id: LocalId,
        total: u16,
        corners: CornerCounts,
    },
    Coord {
        id: LocalId,
        x: u16,
        y: u16,
        dims: Option<(u16, u16)>,
    },
    Sync {
        phase: u16,
    },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CodecError {
    #[error("unknown message type tag {0}")]
    UnknownTag(u8),
    #[error("repair message lists {0} ids, at most {REPAIR_SLOTS} fit")]
    RepairOverflow(usize),
    #[error("field value {value} exceeds the {bits}-bit slot")]
    FieldOverflow { value: u32, bits: u32 },
    #[error("invalid position group code {0}")]
    BadGroup(u8),
}

impl Message {
    pub fn kind(&self) -> MessageKind {
        match self {
            Message::Id { .. } => MessageKind::Sr1aId,
            Message::Relay { .. } => MessageKind::Sr1aRelay,
            Message::Repair { .. } => MessageKind::Sr1bRepair,
            Message::NeighborCount { .. } => MessageKind::Sr1cCount,
            Message::Token { .. } => MessageKind::Sr2aToken,
            Message::Axes { .. } => MessageKind::Sr2aAxes,
            Message::BorderCount { near_corner: false, .. } => MessageKind::Sr2bCount,
            Message::BorderCount { near_corner: true, .. } => MessageKind::Sr2bCountNearCorner,
            Message::Totals { .. } => MessageKind::Sr2bTotals,
            Message::Coord { .. } => MessageKind::Sr2cCoord,
            Message::Sync { .. } => MessageKind::Sync,
        }
    }

    /// Sender id, for the message types that carry one.
    pub fn sender(&self) -> Option<LocalId> {
        match self {
            Message::Id { id }
            | Message::Relay { id, .. }
            | Message::Repair { id, .. }
            | Message::NeighborCount { id, .. }
            | Message::Axes { id, .. }
            | Message::BorderCount { id, .. }
            | Message::Totals { id, .. }
            | Message::Coord { id, .. } => Some(*id),
            Message::Token { .. } | Message::Sync { .. } => None,
        }
    }

    pub fn encode(&self) -> Result<Payload, CodecError> {
        let mut out = [0u8; PAYLOAD_LEN];
        let mut flags = 0u8;
        match self {
            Message::Id { id } => out[1] = id.0,
            Message::Relay { id, nonce, relay } => {
                out[1] = id.0;
                out[2] = nonce.0;
                if let Some((rid, rnonce)) = relay {
                    flags |= 0x1;
                    out[3] = rid.0;
                    out[4] = rnonce.0;
                }
            }
            Message::Repair { id, listed } => {
                if listed.len() > REPAIR_SLOTS {
                    return Err(CodecError::RepairOverflow(listed.len()));
                }
                out[1] = id.0;
                for (slot, nid) in out[2..].iter_mut().zip(listed) {
                    *slot = nid.0;
                }
                flags = listed.len() as u8;
            }
            Message::NeighborCount { id, count, group } => {
                out[1] = id.0;
                out[2] = *count;
                out[3] = group.code();
            }
            Message::Token { token } => {
                let raw = token.0;
                if raw > OriginToken::MASK {
                    return Err(CodecError::FieldOverflow { value: u32::MAX, bits: OriginToken::BITS });
                }
                flags = (raw >> 64) as u8 & 0x0f;
                out[1..9].copy_from_slice(&(raw as u64).to_be_bytes());
            }
            Message::Axes { id, x, y, lower_id_border } => {
                out[1] = id.0;
                out[2] = *x;
                out[3] = *y;
                out[4] = lower_id_border.0;
            }
            Message::BorderCount { id, count, corners, .. } => {
                out[1] = id.0;
                pack_14(&mut out, [*count, corners[0], corners[1], corners[2]])?;
            }
            Message::Totals { id, total, corners } => {
                out[1] = id.0;
                pack_14(&mut out, [*total, corners[0], corners[1], corners[2]])?;
            }
            Message::Coord { id, x, y, dims } => {
                out[1] = id.0;
                out[2..4].copy_from_slice(&x.to_be_bytes());
                out[4..6].copy_from_slice(&y.to_be_bytes());
                let (w, h) = dims.unwrap_or((0, 0));
                for v in [w, h] {
                    if v > MAX_DIMENSION {
                        return Err(CodecError::FieldOverflow { value: v as u32, bits: 12 });
                    }
                }
                let packed = ((w as u32) << 12) | h as u32;
                out[6..9].copy_from_slice(&packed.to_be_bytes()[1..]);
            }
            Message::Sync { phase } => out[1..3].copy_from_slice(&phase.to_be_bytes()),
        }
        out[0] = ((self.kind() as u8) << 4) | (flags & 0x0f);
        Ok(out)
    }

    pub fn decode(payload: &Payload) -> Result<Message, CodecError> {
        let tag = payload[0] >> 4;
        let flags = payload[0] & 0x0f;
        let kind = MessageKind::from_tag(tag).ok_or(CodecError::UnknownTag(tag))?;
        let id = LocalId(payload[1]);
        let msg = match kind {
            MessageKind::Sr1aId => Message::Id { id },
            MessageKind::Sr1aRelay => Message::Relay {
                id,
                nonce: Nonce(payload[2]),
                relay: (flags & 0x1 != 0).then_some((LocalId(payload[3]), Nonce(payload[4]))),
            },
            MessageKind::Sr1bRepair => {
                let n = flags as usize;
                if n > REPAIR_SLOTS {
                    return Err(CodecError::RepairOverflow(n));
                }
                Message::Repair { id, listed: payload[2..2 + n].iter().map(|&b| LocalId(b)).collect() }
            }
            MessageKind::Sr1cCount => Message::NeighborCount {
                id,
                count: payload[2],
                group: PositionGroup::from_code(payload[3]).ok_or(CodecError::BadGroup(payload[3]))?,
            },
            MessageKind::Sr2aToken => {
                let mut low = [0u8; 8];
                low.copy_from_slice(&payload[1..9]);
                let raw = ((flags as u128) << 64) | u64::from_be_bytes(low) as u128;
                Message::Token { token: OriginToken(raw) }
            }
            MessageKind::Sr2aAxes => Message::Axes {
                id,
                x: payload[2],
                y: payload[3],
                lower_id_border: LocalId(payload[4]),
            },
            MessageKind::Sr2bCount | MessageKind::Sr2bCountNearCorner => {
                let [count, c1, c2, c3] = unpack_14(payload);
                Message::BorderCount {
                    id,
                    count,
                    corners: [c1, c2, c3],
                    near_corner: kind == MessageKind::Sr2bCountNearCorner,
                }
            }
            MessageKind::Sr2bTotals => {
                let [total, c1, c2, c3] = unpack_14(payload);
                Message::Totals { id, total, corners: [c1, c2, c3] }
            }
            MessageKind::Sr2cCoord => {
                let packed = u32::from_be_bytes([0, payload[6], payload[7], payload[8]]);
                let (w, h) = ((packed >> 12) as u16, (packed & 0xfff) as u16);
                Message::Coord {
                    id,
                    x: u16::from_be_bytes([payload[2], payload[3]]),
                    y: u16::from_be_bytes([payload[4], payload[5]]),
                    dims: (w != 0 && h != 0).then_some((w, h)),
                }
            }
            MessageKind::Sync => Message::Sync { phase: u16::from_be_bytes([payload[1], payload[2]]) },
        };
        Ok(msg)
    }
}

fn pack_14(out: &mut Payload, values: [u16; 4]) -> Result<(), CodecError> {
    let mut acc = 0u64;
    for v in values {
        if v > MAX_BORDER_COUNT {
            return Err(CodecError::FieldOverflow { value: v as u32, bits: 14 });
        }
        acc = (acc << 14) | v as u64;
    }
    out[2..9].copy_from_slice(&acc.to_be_bytes()[1..]);
    Ok(())
}

fn unpack_14(payload: &Payload) -> [u16; 4] {
    let mut buf = [0u8; 8];
    buf[1..].copy_from_slice(&payload[2..9]);
    let acc = u64::from_be_bytes(buf);
    let field = |shift: u32| ((acc >> shift) & MAX_BORDER_COUNT as u64) as u16;
    [field(42), field(28), field(14), field(0)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let p = Message::Sync { phase: 0x0102 }.encode().unwrap();
        assert_eq!(p, [0xa0, 0x01, 0x02, 0, 0, 0, 0, 0, 0]);
        let p = Message::Relay { id: LocalId(9), nonce: Nonce(4), relay: None }.encode().unwrap();
        assert_eq!(p, [0x10, 9, 4, 0, 0, 0, 0, 0, 0]);
        let p = Message::Relay { id: LocalId(9), nonce: Nonce(4), relay: Some((LocalId(0), Nonce(0))) }
            .encode()
            .unwrap();
        assert_eq!(p, [0x11, 9, 4, 0, 0, 0, 0, 0, 0]);
    }

    #[test]
    fn border_count_fields_are_packed_big_endian() {
        let msg = Message::BorderCount { id: LocalId(3), count: 1, corners: [2, 3, 4], near_corner: true };
        let p = msg.encode().unwrap();
        assert_eq!(p[0], 0x70);
        let expected: u64 = (1 << 42) | (2 << 28) | (3 << 14) | 4;
        assert_eq!(&p[2..], &expected.to_be_bytes()[1..]);
        assert_eq!(Message::decode(&p).unwrap(), msg);
    }

    #[test]
    fn token_uses_header_nibble() {
        let token = OriginToken::new(0xA_0123_4567_89AB_CDEF);
        let p = Message::Token { token }.encode().unwrap();
        assert_eq!(p[0], 0x4a);
        assert_eq!(&p[1..], &0x0123_4567_89AB_CDEFu64.to_be_bytes());
    }

    #[test]
    fn overflow_is_rejected() {
        let msg = Message::Totals { id: LocalId(1), total: MAX_BORDER_COUNT + 1, corners: [0; 3] };
        assert!(matches!(msg.encode(), Err(CodecError::FieldOverflow { bits: 14, .. })));
        let msg = Message::Repair { id: LocalId(1), listed: vec![LocalId(0); 8] };
        assert_eq!(msg.encode(), Err(CodecError::RepairOverflow(8)));
        let mut p = [0u8; 9];
        p[0] = 0xb0;
        assert_eq!(Message::decode(&p), Err(CodecError::UnknownTag(11)));
    }

    fn arb_message() -> impl Strategy<Value = Message> {
        let id = any::<u8>().prop_map(LocalId);
        let group = prop_oneof![
            Just(PositionGroup::Unknown),
            Just(PositionGroup::Corner),
            Just(PositionGroup::Border),
            Just(PositionGroup::Middle),
        ];
        let c14 = 0..=MAX_BORDER_COUNT;
        prop_oneof![
            id.clone().prop_map(|id| Message::Id { id }),
            (id.clone(), any::<u8>(), proptest::option::of((any::<u8>(), any::<u8>()))).prop_map(|(id, n, r)| {
                Message::Relay { id, nonce: Nonce(n), relay: r.map(|(a, b)| (LocalId(a), Nonce(b))) }
            }),
            (id.clone(), proptest::collection::vec(any::<u8>(), 0..=REPAIR_SLOTS))
                .prop_map(|(id, l)| Message::Repair { id, listed: l.into_iter().map(LocalId).collect() }),
            (id.clone(), any::<u8>(), group).prop_map(|(id, count, group)| Message::NeighborCount { id, count, group }),
            any::<u128>().prop_map(|t| Message::Token { token: OriginToken::new(t) }),
            (id.clone(), any::<u8>(), any::<u8>(), any::<u8>())
                .prop_map(|(id, x, y, l)| Message::Axes { id, x, y, lower_id_border: LocalId(l) }),
            (id.clone(), c14.clone(), [c14.clone(), c14.clone(), c14.clone()], any::<bool>()).prop_map(
                |(id, count, corners, near_corner)| Message::BorderCount { id, count, corners, near_corner }
            ),
            (id.clone(), c14.clone(), [c14.clone(), c14.clone(), c14])
                .prop_map(|(id, total, corners)| Message::Totals { id, total, corners }),
            (id, any::<u16>(), any::<u16>(), proptest::option::of((1..=MAX_DIMENSION, 1..=MAX_DIMENSION)))
                .prop_map(|(id, x, y, dims)| Message::Coord { id, x, y, dims }),
            any::<u16>().prop_map(|phase| Message::Sync { phase }),
        ]
    }

    proptest! {
        #[test]
        fn codec_round_trips(msg in arb_message()) {
            let payload = msg.encode().unwrap();
            prop_assert_eq!(payload[0] >> 4, msg.kind() as u8);
            prop_assert_eq!(Message::decode(&payload).unwrap(), msg);
        }
    }
}
