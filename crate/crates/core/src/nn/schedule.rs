use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Schedule {
    /// Linear ramp from 0 to `peak` over `warmup_steps`, then cosine decay to
    /// 0 at `total_steps`.
    WarmupCosine {
        peak: f64,
        warmup_steps: u64,
        total_steps: u64,
    },
    /// Triangle wave starting at `floor`, reaching `ceil` every odd multiple
    /// of `half_cycle` steps.
    CyclicalTriangular { floor: f64, ceil: f64, half_cycle: u64 },
}

impl Schedule {
    pub fn warmup_cosine(peak: f64, warmup_steps: u64, total_steps: u64) -> Result<Self> {
        let s = Schedule::WarmupCosine {
            peak,
            warmup_steps,
            total_steps,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn cyclical(floor: f64, ceil: f64, half_cycle: u64) -> Result<Self> {
        let s = Schedule::CyclicalTriangular {
            floor,
            ceil,
            half_cycle,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Schedule::WarmupCosine {
                peak,
                warmup_steps,
                total_steps,
            } => {
                if !(peak > 0.0 && peak.is_finite()) {
                    return Err(Error::Config(format!("peak lr must be positive, got {peak}")));
                }
                if warmup_steps >= total_steps {
                    return Err(Error::Config(format!(
                        "warmup ({warmup_steps} steps) must be shorter than training ({total_steps} steps)"
                    )));
                }
            }
            Schedule::CyclicalTriangular {
                floor,
                ceil,
                half_cycle,
            } => {
                if !(floor >= 0.0 && floor < ceil && ceil.is_finite()) {
                    return Err(Error::Config(format!(
                        "cyclical lr needs 0 <= floor < ceil, got {floor}..{ceil}"
                    )));
                }
                if half_cycle == 0 {
                    return Err(Error::Config("half cycle must be at least one step".into()));
                }
            }
        }
        Ok(())
    }

    pub fn lr_at(&self, step: u64) -> f64 {
        match *self {
            Schedule::WarmupCosine {
                peak,
                warmup_steps,
                total_steps,
            } => {
                if step < warmup_steps {
                    peak * step as f64 / warmup_steps as f64
                } else if step > total_steps {
                    0.0
                } else {
                    let progress =
                        (step - warmup_steps) as f64 / (total_steps - warmup_steps) as f64;
                    let lr = peak * 0.5 * (1.0 + (PI * progress).cos());
                    if step == total_steps {
                        0.0
                    } else {
                        lr.max(0.0)
                    }
                }
            }
            Schedule::CyclicalTriangular {
                floor,
                ceil,
                half_cycle,
            } => {
                let pos = step % (2 * half_cycle);
                let frac = if pos <= half_cycle {
                    pos as f64 / half_cycle as f64
                } else {
                    (2 * half_cycle - pos) as f64 / half_cycle as f64
                };
                floor + (ceil - floor) * frac
            }
        }
    }
}
