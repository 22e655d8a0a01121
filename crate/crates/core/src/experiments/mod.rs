//! Noise model, repetition harness, error and ratio studies, CSV output.

mod config;
mod noise;
mod study;
mod table;
#[cfg(test)]
mod tests;

pub use config::{DataSource, MRule, StudyConfig};
pub use noise::{normal_block, standard_normal, NoiseSpec};
pub use study::{
    emit_noise_study, emit_ratio_study, normalization_scale, prepare_study, run_noise_study, run_noise_study_with, run_ratio_study,
    run_ratio_study_with, NoiseStudy, RatioStudy, SlopeFit, StudyData, DIFFUSION_RESOLUTION,
};
pub use table::{fit_loglog_slope, ErrorRow, ErrorTable, LogLogFit, CSV_HEADER};
