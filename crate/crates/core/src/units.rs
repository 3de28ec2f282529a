use serde::{Deserialize, Serialize};

/// Logarithm base used for reported information quantities.
///
/// Everything is computed in bits; conversion happens at the output edge.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LogBase {
    #[default]
    Bits,
    Nats,
}

impl LogBase {
    /// Multiplier taking a value in bits to this base.
    pub fn from_bits(self) -> f64 {
        match self {
            LogBase::Bits => 1.0,
            LogBase::Nats => std::f64::consts::LN_2,
        }
    }

    pub fn convert(self, bits: f64) -> f64 {
        bits * self.from_bits()
    }

    /// `log(v)` in this base.
    pub fn log(self, v: f64) -> f64 {
        match self {
            LogBase::Bits => v.log2(),
            LogBase::Nats => v.ln(),
        }
    }
}
