use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Emergency Severity Index level, 1 (resuscitation) through 5 (non-urgent).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Esi(u8);

impl Esi {
    pub const ALL: [Esi; 5] = [Esi(1), Esi(2), Esi(3), Esi(4), Esi(5)];

    pub fn new(level: u8) -> Option<Self> {
        (1..=5).contains(&level).then_some(Esi(level))
    }

    /// Zero-based class index used by the classifier.
    pub fn from_class(class: usize) -> Option<Self> {
        u8::try_from(class).ok().and_then(|c| Self::new(c + 1))
    }

    pub fn level(self) -> u8 {
        self.0
    }

    pub fn class(self) -> usize {
        usize::from(self.0 - 1)
    }
}

impl fmt::Display for Esi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ESI {}", self.0)
    }
}

impl TryFrom<i64> for Esi {
    type Error = String;

    fn try_from(value: i64) -> Result<Self, Self::Error> {
        u8::try_from(value).ok().and_then(Esi::new).ok_or_else(|| format!("ESI level must be 1-5, got {value}"))
    }
}

impl Serialize for Esi {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_u8(self.0)
    }
}

impl<'de> Deserialize<'de> for Esi {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = i64::deserialize(deserializer)?;
        Esi::try_from(raw).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_mapping_round_trips() {
        for esi in Esi::ALL {
            assert_eq!(Esi::from_class(esi.class()), Some(esi));
        }
        assert_eq!(Esi::from_class(5), None);
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(Esi::new(0).is_none());
        assert!(Esi::new(6).is_none());
        assert!(serde_json::from_str::<Esi>("7").is_err());
        assert_eq!(serde_json::from_str::<Esi>("2").unwrap(), Esi::new(2).unwrap());
    }
}
