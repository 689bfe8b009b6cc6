use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::MASTER_SAMPLE_RATE_HZ;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    Linear,
    Fsk,
    Analog,
    Noise,
}

macro_rules! mod_names {
    ($($variant:ident => $text:literal),* $(,)?) => {
        /// The 23 modulation classes.
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum ModName {
            $($variant),*
        }

        impl ModName {
            pub const ALL: [ModName; 23] = [$(ModName::$variant),*];

            pub fn as_str(self) -> &'static str {
                match self {
                    $(ModName::$variant => $text),*
                }
            }
        }

        impl FromStr for ModName {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($text => Ok(ModName::$variant),)*
                    other => Err(Error::UnknownClass(other.to_string())),
                }
            }
        }
    };
}

mod_names! {
    Bpsk => "BPSK",
    Qpsk => "QPSK",
    Psk8 => "PSK8",
    Psk16 => "PSK16",
    Oqpsk => "OQPSK",
    Qam16 => "QAM16",
    Qam32 => "QAM32",
    Qam64 => "QAM64",
    Apsk16 => "APSK16",
    Apsk32 => "APSK32",
    Fsk5k => "FSK5k",
    Fsk75k => "FSK75k",
    Gfsk5k => "GFSK5k",
    Gfsk75k => "GFSK75k",
    Msk => "MSK",
    Gmsk => "GMSK",
    FmNb => "FM-NB",
    FmWb => "FM-WB",
    AmDsb => "AM-DSB",
    AmDsbsc => "AM-DSBSC",
    AmLsb => "AM-LSB",
    AmUsb => "AM-USB",
    Awgn => "AWGN",
}

impl fmt::Display for ModName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Serialize for ModName {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for ModName {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

const EXCESS_BANDWIDTHS: [f64; 2] = [0.35, 0.5];
const LINEAR_OVERLAP: (usize, usize) = (3, 5);
const GAUSSIAN_OVERLAPS: [usize; 3] = [2, 3, 4];
const GAUSSIAN_BETA: (f64, f64) = (0.3, 0.5);

impl ModName {
    pub fn family(self) -> Family {
        use ModName::*;
        match self {
            Bpsk | Qpsk | Psk8 | Psk16 | Oqpsk | Qam16 | Qam32 | Qam64 | Apsk16 | Apsk32 => {
                Family::Linear
            }
            Fsk5k | Fsk75k | Gfsk5k | Gfsk75k | Msk | Gmsk => Family::Fsk,
            FmNb | FmWb | AmDsb | AmDsbsc | AmLsb | AmUsb => Family::Analog,
            Awgn => Family::Noise,
        }
    }

    pub fn symbol_order(self) -> Option<usize> {
        use ModName::*;
        Some(match self {
            Bpsk => 2,
            Qpsk | Oqpsk => 4,
            Psk8 => 8,
            Psk16 | Qam16 | Apsk16 => 16,
            Qam32 | Apsk32 => 32,
            Qam64 => 64,
            _ => return None,
        })
    }

    /// Carrier spacing in Hz for the FSK family.
    pub fn carrier_spacing_hz(self) -> Option<f64> {
        use ModName::*;
        match self {
            Fsk5k | Gfsk5k => Some(5.0e3),
            Fsk75k | Gfsk75k => Some(75.0e3),
            Msk | Gmsk => Some(2.5e3),
            _ => None,
        }
    }

    pub fn is_gaussian(self) -> bool {
        matches!(self, ModName::Gfsk5k | ModName::Gfsk75k | ModName::Gmsk)
    }

    pub fn is_msk(self) -> bool {
        matches!(self, ModName::Msk | ModName::Gmsk)
    }

    /// Legal modulation-index interval for the analog family.
    pub fn modulation_index_range(self) -> Option<(f64, f64)> {
        use ModName::*;
        match self {
            FmNb => Some((0.05, 0.4)),
            FmWb => Some((0.825, 1.88)),
            AmDsb | AmDsbsc | AmLsb | AmUsb => Some((0.5, 0.9)),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FskShape {
    Rect,
    Gaussian { beta: f64 },
}

/// Family-specific generation parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModParams {
    Linear {
        order: usize,
        excess_bandwidth: f64,
        symbol_overlap: usize,
    },
    Fsk {
        carrier_spacing_hz: f64,
        shape: FskShape,
        symbol_overlap: usize,
    },
    Analog {
        modulation_index: f64,
    },
    Noise,
}

/// A modulation class together with one concrete draw of its parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModClass {
    pub name: ModName,
    pub params: ModParams,
}

impl ModClass {
    pub fn new(name: ModName, params: ModParams) -> Result<Self> {
        let class = Self { name, params };
        class.validate()?;
        Ok(class)
    }

    pub fn family(&self) -> Family {
        self.name.family()
    }

    /// Draws parameters uniformly from the legal space of `name`.
    pub fn random<R: Rng + ?Sized>(name: ModName, rng: &mut R) -> Self {
        let params = match name.family() {
            Family::Linear => ModParams::Linear {
                order: name.symbol_order().expect("linear classes have an order"),
                excess_bandwidth: EXCESS_BANDWIDTHS[rng.gen_range(0..EXCESS_BANDWIDTHS.len())],
                symbol_overlap: rng.gen_range(LINEAR_OVERLAP.0..=LINEAR_OVERLAP.1),
            },
            Family::Fsk => {
                let (shape, symbol_overlap) = if name.is_gaussian() {
                    (
                        FskShape::Gaussian {
                            beta: rng.gen_range(GAUSSIAN_BETA.0..=GAUSSIAN_BETA.1),
                        },
                        GAUSSIAN_OVERLAPS[rng.gen_range(0..GAUSSIAN_OVERLAPS.len())],
                    )
                } else {
                    (FskShape::Rect, 1)
                };
                ModParams::Fsk {
                    carrier_spacing_hz: name.carrier_spacing_hz().expect("fsk spacing"),
                    shape,
                    symbol_overlap,
                }
            }
            Family::Analog => {
                let (lo, hi) = name.modulation_index_range().expect("analog index range");
                ModParams::Analog {
                    modulation_index: rng.gen_range(lo..=hi),
                }
            }
            Family::Noise => ModParams::Noise,
        };
        Self { name, params }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(format!("{}: {msg}", self.name)));
        match (self.name.family(), self.params) {
            (
                Family::Linear,
                ModParams::Linear {
                    order,
                    excess_bandwidth,
                    symbol_overlap,
                },
            ) => {
                if Some(order) != self.name.symbol_order() {
                    return bad(format!("symbol order {order} not supported"));
                }
                if !EXCESS_BANDWIDTHS.contains(&excess_bandwidth) {
                    return bad(format!("excess bandwidth {excess_bandwidth} not in {{0.35, 0.5}}"));
                }
                if !(LINEAR_OVERLAP.0..=LINEAR_OVERLAP.1).contains(&symbol_overlap) {
                    return bad(format!("symbol overlap {symbol_overlap} not in [3, 5]"));
                }
                Ok(())
            }
            (
                Family::Fsk,
                ModParams::Fsk {
                    carrier_spacing_hz,
                    shape,
                    symbol_overlap,
                },
            ) => {
                if Some(carrier_spacing_hz) != self.name.carrier_spacing_hz() {
                    return bad(format!("carrier spacing {carrier_spacing_hz} Hz"));
                }
                match (self.name.is_gaussian(), shape) {
                    (true, FskShape::Gaussian { beta }) => {
                        if !(GAUSSIAN_BETA.0..=GAUSSIAN_BETA.1).contains(&beta) {
                            return bad(format!("beta {beta} not in [0.3, 0.5]"));
                        }
                        if !GAUSSIAN_OVERLAPS.contains(&symbol_overlap) {
                            return bad(format!("symbol overlap {symbol_overlap} not in {{2, 3, 4}}"));
                        }
                        Ok(())
                    }
                    (false, FskShape::Rect) => {
                        if symbol_overlap != 1 {
                            return bad(format!("symbol overlap {symbol_overlap} must be 1"));
                        }
                        Ok(())
                    }
                    _ => bad("phase shape does not match class".into()),
                }
            }
            (Family::Analog, ModParams::Analog { modulation_index }) => {
                let (lo, hi) = self.name.modulation_index_range().expect("analog range");
                if !(lo..=hi).contains(&modulation_index) {
                    return bad(format!("modulation index {modulation_index} not in [{lo}, {hi}]"));
                }
                Ok(())
            }
            (Family::Noise, ModParams::Noise) => Ok(()),
            _ => bad("parameter record does not match family".into()),
        }
    }

    /// Per-sample frequency deviation (cycles/sample) of a binary FSK tone.
    ///
    /// MSK-type classes are pinned to modulation index 1/2, i.e. a phase
    /// change of pi/2 per symbol; the others map their carrier spacing
    /// through the master sample rate.
    pub fn fsk_deviation(&self, sps: usize) -> Option<f64> {
        match self.params {
            ModParams::Fsk {
                carrier_spacing_hz, ..
            } => Some(if self.name.is_msk() {
                0.25 / sps as f64
            } else {
                carrier_spacing_hz / MASTER_SAMPLE_RATE_HZ
            }),
            _ => None,
        }
    }
}

/// Channel and hardware impairments applied to a clean frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImpairmentSpec {
    pub snr_db: f64,
    /// Frequency offset as a fraction of the sample rate.
    pub fo_frac: f64,
    /// Initial phase, radians.
    pub phase0: f64,
}

impl ImpairmentSpec {
    pub fn validate(&self) -> Result<()> {
        if !self.snr_db.is_finite() {
            return Err(Error::InvalidParameter("snr_db must be finite".into()));
        }
        if !(-0.5..0.5).contains(&self.fo_frac) {
            return Err(Error::InvalidParameter(format!(
                "fo_frac {} outside [-0.5, 0.5)",
                self.fo_frac
            )));
        }
        if !self.phase0.is_finite() {
            return Err(Error::InvalidParameter("phase0 must be finite".into()));
        }
        Ok(())
    }
}
