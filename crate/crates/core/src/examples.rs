//! Complete programs from the `examples/` directory, runnable with
//! `cargo run --release --example <name>`.

/// # Synthesizing a dataset and writing it to disk
///
/// ```rust,no_run
#[doc = include_str!("../examples/synthesize_dataset.rs")]
/// ```
pub mod synthesize_dataset {}

/// # Perturbing guidance masks, CutMask and trimaps
///
/// ```rust,no_run
#[doc = include_str!("../examples/perturb_guidance.rs")]
/// ```
pub mod perturb_guidance {}

/// # The pyramid training loss
///
/// ```rust,no_run
#[doc = include_str!("../examples/pyramid_losses.rs")]
/// ```
pub mod pyramid_losses {}

/// # Training a matting network and refining with different guidance
///
/// ```rust,no_run
#[doc = include_str!("../examples/train_and_refine.rs")]
/// ```
pub mod train_and_refine {}

/// # Checkpointing and resuming a run
///
/// ```rust,no_run
#[doc = include_str!("../examples/resume_training.rs")]
/// ```
pub mod resume_training {}

/// # Foreground colour prediction trained with random alpha blending
///
/// ```rust,no_run
#[doc = include_str!("../examples/foreground_color.rs")]
/// ```
pub mod foreground_color {}

/// # SAD, MSE, Grad and Conn with per-region aggregation
///
/// ```rust,no_run
#[doc = include_str!("../examples/evaluate_metrics.rs")]
/// ```
pub mod evaluate_metrics {}
