//! File formats: depth maps (16-bit PNG, PFM), DPM containers,
//! configuration files and report tables.

mod config;
mod depth;
mod dpm_file;
mod report;

pub use config::{parse_config, read_config, RunConfig, CONFIG_KEYS};
pub use depth::{
    read_depth, read_depth_png16, read_pfm, write_depth, write_depth_png16, write_pfm, PNG16_MAX_DEPTH,
    PNG16_SCALE,
};
pub use dpm_file::{
    dpm_from_bytes, dpm_to_bytes, read_dpm, write_dpm, DpmFileHeader, DPM_FILE_TOLERANCE, DPM_HEADER_LEN,
    DPM_MAGIC, DPM_VERSION,
};
pub use report::{
    format_number, parse_csv_report, read_report_csv, render_csv, render_json, write_report, ReportFormat,
    Table,
};
