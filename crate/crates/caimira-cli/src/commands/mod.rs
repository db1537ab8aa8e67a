pub mod analysis;
pub mod embed;
pub mod ingest;
pub mod interpretcmd;
pub mod matchcmd;
pub mod model;
pub mod synthcmd;

use std::path::Path;

use caimira_core::{CoreError, Result};

/// Create the output directory and run manifest verification when asked.
pub fn prepare_out_dir(out: &Path, verify: bool) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| CoreError::io(out, e))?;
    if verify {
        crate::manifest::verify_manifest(out)?;
    }
    Ok(())
}
