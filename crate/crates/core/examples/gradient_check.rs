//! Central-difference check of a two-layer GRU unroll with attention.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vaseq::autodiff::{NormMode, Tensor};
use vaseq::cells::{CellKind, Rnn, RnnConfig};
use vaseq::params::{gradient_check_params, ParamStore};

fn main() -> anyhow::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut store = ParamStore::<f64>::new();
    let cfg = RnnConfig { cell: CellKind::Gru, layers: 2, hidden: 3, attention: Some(3), steps: 5, ..RnnConfig::default() };
    let rnn = Rnn::register(&mut store, "rnn", 4, &cfg, &mut rng)?;
    let data: Vec<f64> = (0..2 * 5 * 4).map(|i| ((i * 37 % 11) as f64 - 5.0) / 5.0).collect();
    let x = store.weight("x", Tensor::new(&[2, 5, 4], data)?);
    let err = gradient_check_params(
        &store,
        NormMode::Training,
        |s| {
            let xv = s.p(x);
            rnn.unroll(s, xv)
        },
        1e-5,
    )?;
    println!("worst relative error over {} parameters: {err:.2e}", store.ids().count());
    Ok(())
}
