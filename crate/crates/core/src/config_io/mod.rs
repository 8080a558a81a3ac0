//! Scenario configuration, deterministic random streams and CSV output.

mod rng;
mod scenario;
mod table;

pub use rng::{complex_normal, make_rng, RngFactory, Stream};
pub use scenario::{
    db_to_linear, dbm_to_watts, parse_config, ConfigError, Geometry, PathLossExponents,
    RicianFactors, ScenarioConfig, SolverControls,
};
pub use table::{write_csv, Field, Table};

use crate::admm::SolveReport;

/// Everything one CLI invocation leaves behind.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    /// The configuration text exactly as it was read.
    pub config_echo: String,
    pub csv_tables: Vec<Table>,
    pub reports: Vec<SolveReport>,
}

impl RunArtifacts {
    pub fn new(config_echo: impl Into<String>) -> Self {
        Self {
            config_echo: config_echo.into(),
            csv_tables: Vec::new(),
            reports: Vec::new(),
        }
    }

    /// Writes `config_echo.toml` and one `<name>.csv` per table into `dir`.
    pub fn write_to(&self, dir: &std::path::Path) -> crate::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("config_echo.toml"), self.config_echo.as_bytes())?;
        for table in &self.csv_tables {
            write_csv(&dir.join(format!("{}.csv", table.name)), table)?;
        }
        Ok(())
    }
}
