use serde::Serialize;

use crate::demand::{DeferrableSpec, DeviceSet, PenaltyFunction};
use crate::error::{Error, Result};
use crate::tariff::TariffCalendar;

/// Everything that defines one scheduling instance except the supply model.
#[derive(Debug, Clone, Serialize)]
pub struct Problem {
    pub spec: DeferrableSpec,
    pub devices: DeviceSet,
    pub penalty: PenaltyFunction,
    pub tariff: TariffCalendar,
}

impl Problem {
    pub fn new(spec: DeferrableSpec, devices: DeviceSet, penalty: PenaltyFunction, tariff: TariffCalendar) -> Result<Self> {
        let p = Problem { spec, devices, penalty, tariff };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        self.devices.validate()?;
        if self.tariff.horizon() != self.spec.horizon {
            return Err(Error::param(format!(
                "tariff covers {} intervals but the horizon is {}",
                self.tariff.horizon(),
                self.spec.horizon
            )));
        }
        if let Some(&t) = self.devices.overrides.keys().find(|&&t| t >= self.spec.horizon) {
            return Err(Error::param(format!("device override at interval {} lies beyond the horizon", t + 1)));
        }
        self.penalty.check_against(&self.tariff)
    }

    pub fn horizon(&self) -> usize {
        self.spec.horizon
    }

    pub fn v_max(&self) -> f64 {
        self.spec.v_max
    }
}
