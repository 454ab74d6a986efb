//! Run the default closed loop and print the EPR table.
//!
//! `cargo run --release -p spadcorr --example closed_loop -- [frames] [pairs_per_frame]`

use std::time::Instant;

use spadcorr::pipeline::{run_closed_loop, PipelineConfig};

fn main() {
    let mut args = std::env::args().skip(1);
    let mut config = PipelineConfig::default();
    if let Some(frames) = args.next() {
        config.frames = frames.parse().expect("frames");
    }
    if let Some(mean) = args.next() {
        config.pairs_per_frame = mean.parse().expect("pairs_per_frame");
    }
    let start = Instant::now();
    let out = run_closed_loop(&config).expect("closed loop");
    println!("{}", out.evaluation.report.render_table());
    for (k, v) in &out.evaluation.report.diagnostics {
        println!("{k:<40} {v:.4}");
    }
    if let Some(map) = &out.corrected.crosstalk {
        println!(
            "xtalk (1,0) {:.3e} (-1,0) {:.3e} (0,1) {:.3e} (0,-1) {:.3e}",
            map.get(1, 0),
            map.get(-1, 0),
            map.get(0, 1),
            map.get(0, -1)
        );
    }
    for f in &out.evaluation.failures {
        println!("failure: {f:?}");
    }
    println!("elapsed {:.1} s", start.elapsed().as_secs_f64());
}
