//! Concordance correlation against Pearson correlation and MSE.

use vaseq::metrics::{ccc, mse, pearson};

fn main() -> anyhow::Result<()> {
    let truth = [0.1, 0.4, -0.2, 0.7, 0.3, -0.5];
    let cases = [
        ("exact", truth.to_vec()),
        ("shifted", truth.iter().map(|v| v + 0.3).collect()),
        ("halved", truth.iter().map(|v| v * 0.5).collect()),
        ("constant", vec![0.2; truth.len()]),
    ];
    for (name, pred) in cases {
        println!(
            "{name:<9} ccc {:+.3} pearson {:+.3} mse {:.3}",
            ccc(&pred, &truth)?,
            pearson(&pred, &truth)?,
            mse(&pred, &truth)?
        );
    }
    Ok(())
}
