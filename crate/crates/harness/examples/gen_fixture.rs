//! Regenerates `fixtures/homography_matches.csv` and
//! `fixtures/homography_reference.json`.
//!
//! The reference count is the number of matches whose L1 transfer error under
//! the generating homography is at most `epsilon` pixels.

use std::fs::{self, File};
use std::path::Path;

use maxcon_harness::{io::write_matches, synth::synth_homography};
use serde_json::json;

fn main() -> anyhow::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    fs::create_dir_all(&dir)?;
    let epsilon = 4.0;
    let s = synth_homography(120, 0.3, 1.0, 2024)?;
    let h = s.h;
    let count = s
        .matches
        .iter()
        .filter(|m| {
            let w = h[2][0] * m.u[0] + h[2][1] * m.u[1] + h[2][2];
            let e: f64 = (0..2)
                .map(|i| ((h[i][0] * m.u[0] + h[i][1] * m.u[1] + h[i][2]) / w - m.v[i]).abs())
                .sum();
            e <= epsilon
        })
        .count();
    write_matches(&mut File::create(dir.join("homography_matches.csv"))?, &s.matches)?;
    let reference = json!({ "h": h, "epsilon": epsilon, "consensus": count });
    fs::write(
        dir.join("homography_reference.json"),
        serde_json::to_string_pretty(&reference)? + "\n",
    )?;
    println!("{count} of {} matches within {epsilon} px", s.matches.len());
    Ok(())
}
