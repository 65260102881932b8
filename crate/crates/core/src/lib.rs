//! Two-stage generalized dynamic factor model for large panels: a level stage
//! splitting observations into common and idiosyncratic parts, a volatility
//! stage on capped log squared innovations, and quantile-based one-step
//! prediction intervals with backtests.

pub mod error;
pub mod gdfm;
pub mod linalg;
pub mod panel_io;
pub mod simulate;
pub mod spectral;
pub mod volatility;
pub mod forecast;
pub mod backtest;
pub mod garch;

pub use error::{GdfmError, Result};
