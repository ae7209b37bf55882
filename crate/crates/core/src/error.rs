use thiserror::Error;

use crate::charmat::CharMatError;
use crate::config::ConfigError;
use crate::control::ControlError;
use crate::flow::FlowError;
use crate::model::ModelError;
use crate::numkernel::NumError;
use crate::oracle::OracleError;
use crate::report::ReportError;
use crate::roots::RootError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Num(#[from] NumError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    CharMat(#[from] CharMatError),
    #[error(transparent)]
    Root(#[from] RootError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Report(#[from] ReportError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
