//! One module per subcommand.

pub mod evaluate;
pub mod export;
pub mod features;
pub mod score;
pub mod synth;
pub mod toy;
pub mod train;
