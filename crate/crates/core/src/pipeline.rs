//! Config → params → steady state → valley, with one error type.

use thiserror::Error;

use crate::params::{derive_params, ConfigError, SystemConfig, SystemParams};
use crate::spectrum::{find_valley, SpectrumError, ValleyReport};
use crate::steady_state::{solve_steady, SteadyError, SteadyState};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Steady(#[from] SteadyError),
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
}

#[derive(Clone, Debug)]
pub struct Located {
    pub params: SystemParams,
    pub steady: SteadyState,
    pub valley: ValleyReport,
}

pub fn resolve_state(
    config: &SystemConfig,
    branch: Option<usize>,
) -> Result<(SystemParams, SteadyState), PipelineError> {
    let params = derive_params(config)?;
    let steady = solve_steady(&params)?.resolve(branch)?;
    Ok((params, steady))
}

pub fn locate_valley(config: &SystemConfig, branch: Option<usize>) -> Result<Located, PipelineError> {
    let (params, steady) = resolve_state(config, branch)?;
    let valley = find_valley(&params, &steady, None)?;
    Ok(Located {
        params,
        steady,
        valley,
    })
}
