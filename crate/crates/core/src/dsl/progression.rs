use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Attribute, AttributeProgression, Schedule, StartValue};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttrValue {
    Scalar(f64),
    Point(f64, f64),
}

impl AttrValue {
    pub fn scalar(&self) -> f64 {
        match self {
            AttrValue::Scalar(v) => *v,
            AttrValue::Point(x, _) => *x,
        }
    }

    pub fn point(&self) -> (f64, f64) {
        match self {
            AttrValue::Scalar(v) => (*v, 0.0),
            AttrValue::Point(x, y) => (*x, *y),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DomainError {
    #[error("panel count must be ≥ 1")]
    NoPanels,
    #[error("{attribute:?} would be negative ({value}) at panel {panel}")]
    Negative { attribute: Attribute, panel: usize, value: f64 },
    #[error("{attribute:?} must be a whole number, got {value} at panel {panel}")]
    NonInteger { attribute: Attribute, panel: usize, value: f64 },
    #[error("shading must stay in [0, 1], got {value} at panel {panel}")]
    ShadingRange { panel: usize, value: f64 },
    #[error("schedule {schedule:?} with start {start:?} is not defined for {attribute:?}")]
    Unsupported { attribute: Attribute, schedule: Schedule, start: StartValue },
    #[error("value overflowed at panel {panel}")]
    NonFinite { panel: usize },
}

const INTEGRAL_TOLERANCE: f64 = 1e-9;

/// Values taken by `p.attribute` on panels `0..n`.
///
/// * `arithmetic(step)`: `start + i·step`
/// * `geometric(factor, every_k)`: `start · factor^⌊i / every_k⌋`
/// * `toggle`: `start` on even panels, the toggled value on odd ones
///   (`1 − start` for shading, `start + 180` for rotation)
/// * `shift(dx, dy)`: `(x₀ + i·dx, y₀ + i·dy)`
pub fn progression_values(p: &AttributeProgression, n: usize) -> Result<Vec<AttrValue>, DomainError> {
    if n == 0 {
        return Err(DomainError::NoPanels);
    }
    let unsupported =
        || DomainError::Unsupported { attribute: p.attribute, schedule: p.schedule, start: p.start };
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let value = match (p.schedule, p.start) {
            (Schedule::Arithmetic { step }, StartValue::Scalar(s)) => AttrValue::Scalar(s + i as f64 * step),
            (Schedule::Geometric { factor, every_k }, StartValue::Scalar(s)) => {
                if every_k == 0 {
                    return Err(unsupported());
                }
                let exponent = (i / every_k as usize) as i32;
                AttrValue::Scalar(s * factor.powi(exponent))
            }
            (Schedule::Toggle, StartValue::Scalar(s)) => {
                let toggled = match p.attribute {
                    Attribute::Shading => 1.0 - s,
                    Attribute::RotationDeg => s + 180.0,
                    _ => return Err(unsupported()),
                };
                AttrValue::Scalar(if i % 2 == 0 { s } else { toggled })
            }
            (Schedule::Shift { dx, dy }, StartValue::Point(x, y)) => {
                AttrValue::Point(x + i as f64 * dx, y + i as f64 * dy)
            }
            _ => return Err(unsupported()),
        };
        let (a, b) = value.point();
        if !a.is_finite() || !b.is_finite() {
            return Err(DomainError::NonFinite { panel: i });
        }
        if p.attribute.is_integral() {
            let v = value.scalar();
            if v < -INTEGRAL_TOLERANCE {
                return Err(DomainError::Negative { attribute: p.attribute, panel: i, value: v });
            }
            if (v - v.round()).abs() > INTEGRAL_TOLERANCE {
                return Err(DomainError::NonInteger { attribute: p.attribute, panel: i, value: v });
            }
            out.push(AttrValue::Scalar(v.round().max(0.0)));
            continue;
        }
        if p.attribute == Attribute::Shading {
            let v = value.scalar();
            if !(-INTEGRAL_TOLERANCE..=1.0 + INTEGRAL_TOLERANCE).contains(&v) {
                return Err(DomainError::ShadingRange { panel: i, value: v });
            }
        }
        out.push(value);
    }
    Ok(out)
}
