//! End-to-end orchestration: configuration, the attack loop for both the
//! evolutionary method and the refinement-only baseline, follow-up studies
//! and report emission.

mod config;
mod report;
mod run;
mod study;

pub use config::RunConfig;
pub use report::{
    emit_reports, fitness_csv, pc_l2_csv, summary_csv, BaselineSummary, ClassReport, EvalRecord,
    GenerationTrace, RecallReport, RunReport, Strategy, FITNESS_FILE, FITNESS_HEADER, PC_L2_FILE,
    PC_L2_HEADER, REPORT_FILE, SUMMARY_FILE, SUMMARY_HEADER,
};
pub use run::{
    attack_class, execute, execute_in, harvested_examples, positive_recall,
    run_ablation_no_reproduction, run_attack, train_and_score, Run,
};
pub use study::{pc_percentile_study, percentile_index, PcStudy};
