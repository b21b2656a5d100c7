//! Initial densities and doping backgrounds referenced by id from
//! configuration files.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{DensityState, Grid};

const PROFILES: &str = include_str!("../presets/profiles.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialProfile {
    Uniform,
    /// `1 + a cos(mπ s)` with `s = x/L` on the slab and `s = (r/L)²` radially.
    Cosine {
        amplitude: f64,
        #[serde(default = "one")]
        mode: usize,
    },
    /// `exp(-|x - x_c|²/(2w²))`, centred at `L/2` on the slab and at the origin
    /// radially.
    Gaussian {
        width: f64,
    },
    /// Indicator of `{s < fraction · L}`; zero on the rest of the domain.
    Step {
        fraction: f64,
    },
}

fn one() -> usize {
    1
}

impl InitialProfile {
    pub fn validate(&self) -> Result<()> {
        match *self {
            InitialProfile::Uniform => Ok(()),
            InitialProfile::Cosine { amplitude, mode } => {
                if !(amplitude.abs() <= 1.0) || mode == 0 {
                    return Err(Error::InvalidArgument(
                        "cosine profile needs |amplitude| <= 1 and mode >= 1".into(),
                    ));
                }
                Ok(())
            }
            InitialProfile::Gaussian { width } => {
                if !(width > 0.0 && width.is_finite()) {
                    return Err(Error::InvalidArgument("gaussian width must be positive".into()));
                }
                Ok(())
            }
            InitialProfile::Step { fraction } => {
                if !(fraction > 0.0 && fraction <= 1.0) {
                    return Err(Error::InvalidArgument("step fraction must lie in (0, 1]".into()));
                }
                Ok(())
            }
        }
    }

    /// Unnormalized nodal density.
    pub fn density(&self, grid: &Grid) -> Result<Vec<f64>> {
        self.validate()?;
        let l = grid.length();
        let radial = grid.is_radial();
        Ok(grid
            .nodes()
            .iter()
            .map(|&x| match *self {
                InitialProfile::Uniform => 1.0,
                InitialProfile::Cosine { amplitude, mode } => {
                    let s = if radial { (x / l).powi(2) } else { x / l };
                    1.0 + amplitude * (mode as f64 * PI * s).cos()
                }
                InitialProfile::Gaussian { width } => {
                    let c = if radial { 0.0 } else { 0.5 * l };
                    (-(x - c).powi(2) / (2.0 * width * width)).exp()
                }
                InitialProfile::Step { fraction } => {
                    if x < fraction * l {
                        1.0
                    } else {
                        0.0
                    }
                }
            })
            .collect())
    }

    pub fn state(&self, grid: &Grid) -> Result<DensityState> {
        DensityState::from_density(grid, &self.density(grid)?)
    }
}

/// Shipped profiles, keyed by id.
pub fn profile_presets() -> BTreeMap<String, InitialProfile> {
    toml::from_str(PROFILES).expect("shipped profile presets parse")
}

pub fn profile(id: &str) -> Result<InitialProfile> {
    profile_presets()
        .remove(id)
        .ok_or_else(|| Error::UnknownPreset(id.to_string()))
}

/// Background `C` of the interaction potential.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Doping {
    #[default]
    None,
    /// `C ≡ 1/|Ω|`, the neutral background for unit mass.
    Uniform,
}

impl Doping {
    pub fn values(self, grid: &Grid) -> Option<Vec<f64>> {
        match self {
            Doping::None => None,
            Doping::Uniform => Some(vec![1.0 / grid.volume(); grid.len()]),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, Geometry};

    #[test]
    fn shipped_profiles_are_valid() {
        let presets = profile_presets();
        assert!(presets.contains_key("concentrated"));
        let g = build_grid(2, Geometry::Radial, 51, 1.0).unwrap();
        for p in presets.values() {
            let s = p.state(&g).unwrap();
            assert!((s.mass(&g) - 1.0).abs() < 1e-12);
        }
        assert!(matches!(profile("nope"), Err(Error::UnknownPreset(_))));
    }

    #[test]
    fn step_profile_has_zeros() {
        let g = build_grid(1, Geometry::Slab, 11, 1.0).unwrap();
        let n = InitialProfile::Step { fraction: 0.5 }.density(&g).unwrap();
        assert_eq!(n[0], 1.0);
        assert_eq!(n[10], 0.0);
    }
}
