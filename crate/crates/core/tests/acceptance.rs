//! One PASS/FAIL line per acceptance criterion. Runs sequentially so the
//! timed criteria measure a single core.

mod common;

use std::collections::VecDeque;
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use anyhow::{bail, ensure, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vaseq::autodiff::{gradient_check, NormMode, Tensor};
use vaseq::cells::{
    AttentionParams, BackboneConfig, Cell, CellKind, Group, GruParams, IndRnnParams, LstmParams, ModelConfig, Rnn,
    RnnConfig, VggBlock,
};
use vaseq::corpus::{
    match_track, partition, synthesize, AnnotationTrack, Dimension, Split, SynthConfig, FRAME_INTERVAL,
};
use vaseq::datapipe::{
    decode_container, encode_container, parse_frame_id, read_container, scale_pixel, unscale_pixel,
    write_container, Dataset, FrameRecord, Loader, LoaderConfig, IMAGE_BYTES,
};
use vaseq::metrics::{ccc, ccc_loss};
use vaseq::params::{gradient_check_params, ParamId, ParamKind, ParamStore, Session};
use vaseq::train::{
    eval_loop, evaluate, AdamConfig, Case, Checkpoint, CheckpointWriter, EvalLoopConfig, EvalRow, ModelManifest,
    Trainer, TrainConfig,
};

/// Relative error bound of every gradient check.
const GRAD_TOL: f64 = 1e-5;
/// Central-difference step.
const GRAD_EPS: f64 = 1e-5;
const GRAD_INSTANCES: u64 = 100;
const GRAD_BUDGET: Duration = Duration::from_secs(120);
const CCC_TOL: f64 = 1e-10;
const WORKED_TOL: f64 = 1e-12;
const TARGET_CCC: f64 = 0.8;
const E2E_MAX_STEPS: u64 = 2000;
const E2E_BUDGET: Duration = Duration::from_secs(600);
const E2E_EVAL_EVERY: u64 = 25;
const E2E_SEED: u64 = 7;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn randomize(store: &mut ParamStore<f64>, seed: u64) {
    let mut r = rng(seed);
    let ids: Vec<ParamId> = store.ids().collect();
    for id in ids {
        let shape = store.get(id).shape().to_vec();
        *store.get_mut(id) = random(&mut r, &shape);
    }
}

fn bits(t: &Tensor<f32>) -> Vec<u32> {
    t.data().iter().map(|x| x.to_bits()).collect()
}

// ---------------------------------------------------------------- gradients

type StoreOp = Box<dyn Fn(&mut Session<'_, f64>) -> vaseq::Result<vaseq::autodiff::Var>>;

fn gru_step_case(store: &mut ParamStore<f64>) -> StoreOp {
    let p = GruParams::register(store, "c", 3, 4, &mut rng(0));
    let (x, h) = (store.weight("x", Tensor::zeros(&[2, 3])), store.weight("h", Tensor::zeros(&[2, 4])));
    Box::new(move |s| {
        let (xv, hv) = (s.p(x), s.p(h));
        p.step(s, xv, hv)
    })
}

fn lstm_step_case(store: &mut ParamStore<f64>) -> StoreOp {
    let p = LstmParams::register(store, "c", 3, 4, true, &mut rng(0));
    let x = store.weight("x", Tensor::zeros(&[2, 3]));
    let h = store.weight("h", Tensor::zeros(&[2, 4]));
    let c = store.weight("cs", Tensor::zeros(&[2, 4]));
    Box::new(move |s| {
        let (xv, hv, cv) = (s.p(x), s.p(h), s.p(c));
        let (h, c) = p.step(s, xv, hv, cv)?;
        s.tape.concat(&[h, c])
    })
}

fn indrnn_step_case(store: &mut ParamStore<f64>) -> StoreOp {
    let p = IndRnnParams::register(store, "c", 3, 4, 2.0, &mut rng(0));
    let (x, h) = (store.weight("x", Tensor::zeros(&[2, 3])), store.weight("h", Tensor::zeros(&[2, 4])));
    Box::new(move |s| {
        let (xv, hv) = (s.p(x), s.p(h));
        p.step(s, xv, hv)
    })
}

/// Input mixing, read over a three-entry history and the output projection.
fn attention_step_case(store: &mut ParamStore<f64>) -> StoreOp {
    let a = AttentionParams::register(store, "a", 3, 4, 6, 5, 3, &mut rng(0));
    let x = store.weight("x", Tensor::zeros(&[2, 3]));
    let q = store.weight("q", Tensor::zeros(&[2, 6]));
    let cell = store.weight("cell", Tensor::zeros(&[2, 4]));
    let attns = store.weight("attns", Tensor::zeros(&[2, 4]));
    let outs: Vec<ParamId> = (0..3).map(|i| store.weight(format!("o{i}"), Tensor::zeros(&[2, 4]))).collect();
    Box::new(move |s| {
        let mut st = a.zero_state(s, 2);
        st.attns = s.p(attns);
        for &o in &outs {
            let (ov, w1) = (s.p(o), s.p(a.w1));
            let key = s.tape.matmul_nt(ov, w1)?;
            st.history.push_back((ov, key));
        }
        let (xv, qv, cv) = (s.p(x), s.p(q), s.p(cell));
        let mixed = a.mix_input(s, xv, &st)?;
        let (atten, _) = a.read(s, qv, &st)?;
        let out = a.finish(s, cv, atten, &mut st)?;
        s.tape.concat(&[mixed, out])
    })
}

fn unroll_case(kind: CellKind) -> impl Fn(&mut ParamStore<f64>) -> StoreOp {
    move |store| {
        let cfg = RnnConfig { cell: kind, layers: 2, hidden: 3, peepholes: true, attention: Some(3), steps: 5 };
        let rnn = Rnn::register(store, "r", 4, &cfg, &mut rng(1)).unwrap();
        let x = store.weight("x", Tensor::zeros(&[2, 5, 4]));
        Box::new(move |s| {
            let xv = s.p(x);
            rnn.unroll(s, xv)
        })
    }
}

fn gradient_suite() -> Result<String> {
    let start = Instant::now();
    let mut checks = 0;
    for seed in 0..GRAD_INSTANCES {
        let mut r = rng(seed);
        for (name, shapes, op) in common::ops::op_cases() {
            let inputs: Vec<_> = shapes.iter().map(|s| common::ops::separated(&mut r, s)).collect();
            let err = gradient_check(op, &inputs, GRAD_EPS)?;
            ensure!(err <= GRAD_TOL, "{name} instance {seed}: relative error {err:e}");
            checks += 1;
        }
    }
    let ops = checks;
    let cells: Vec<(&str, Box<dyn Fn(&mut ParamStore<f64>) -> StoreOp>)> = vec![
        ("gru step", Box::new(gru_step_case)),
        ("peephole lstm step", Box::new(lstm_step_case)),
        ("indrnn step", Box::new(indrnn_step_case)),
        ("attention step", Box::new(attention_step_case)),
        ("2-layer gru unroll", Box::new(unroll_case(CellKind::Gru))),
        ("2-layer lstm unroll", Box::new(unroll_case(CellKind::Lstm))),
        ("2-layer indrnn unroll", Box::new(unroll_case(CellKind::IndRnn))),
    ];
    for (name, build) in &cells {
        let mut store = ParamStore::<f64>::new();
        let op = build(&mut store);
        for seed in 0..GRAD_INSTANCES {
            randomize(&mut store, 1000 + seed);
            let err = gradient_check_params(&store, NormMode::Training, |s| op(s), GRAD_EPS)?;
            ensure!(err <= GRAD_TOL, "{name} instance {seed}: relative error {err:e}");
            checks += 1;
        }
    }
    let mut r = rng(77);
    for seed in 0..GRAD_INSTANCES {
        let (b, l) = (r.random_range(1..3), r.random_range(2..7));
        let pred = random(&mut r, &[b, l, 2]);
        let truth = random(&mut r, &[b, l, 2]);
        let err = gradient_check(|t, v| ccc_loss(t, v[0], v[1]), &[pred, truth], GRAD_EPS)?;
        ensure!(err <= GRAD_TOL, "ccc_loss instance {seed}: relative error {err:e}");
        checks += 1;
    }
    let elapsed = start.elapsed();
    ensure!(elapsed < GRAD_BUDGET, "took {elapsed:?}, budget {GRAD_BUDGET:?}");
    Ok(format!(
        "{checks} checks ({} ops, {} cell cases, ccc_loss) x {GRAD_INSTANCES}, rel err <= {GRAD_TOL:e}, {:.1} s",
        ops / GRAD_INSTANCES as usize,
        cells.len(),
        elapsed.as_secs_f64()
    ))
}

// --------------------------------------------------------------------- ccc

fn direct_ccc(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sx = x.iter().map(|a| (a - mx) * (a - mx)).sum::<f64>() / n;
    let sy = y.iter().map(|b| (b - my) * (b - my)).sum::<f64>() / n;
    let sxy = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / n;
    2.0 * sxy / (sx + sy + (mx - my) * (mx - my))
}

fn ccc_oracle() -> Result<String> {
    let mut r = rng(1);
    let mut worst = 0.0f64;
    for i in 0..1000 {
        let n = r.random_range(2..200);
        let x: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
        let noise = r.random_range(0.0..2.0);
        let y: Vec<f64> = x.iter().map(|v| 0.7 * v + 0.1 + noise * r.random_range(-1.0..1.0)).collect();
        let err = (ccc(&x, &y)? - direct_ccc(&x, &y)).abs();
        ensure!(err <= CCC_TOL, "pair {i}: |diff| {err:e}");
        worst = worst.max(err);
        ensure!((ccc(&x, &x)? - 1.0).abs() <= CCC_TOL, "pair {i}: ccc(x, x) != 1");
        ensure!(ccc(&vec![0.3; n], &x)? == 0.0, "pair {i}: constant prediction CCC != 0");
    }
    let worked = ccc(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0])?;
    ensure!((worked - 4.0 / 11.0).abs() <= WORKED_TOL, "ccc([1,2,3],[2,4,6]) = {worked}");
    Ok(format!("1000 pairs, worst |diff| {worst:.1e} <= {CCC_TOL:e}; ccc(x,x)=1; constant=0; worked value 4/11"))
}

// ------------------------------------------------------------ cell oracle

/// Sequential dot products against each row of a `rows×cols` matrix.
fn dot_rows(m: &Tensor<f64>, x: &[f64]) -> Vec<f64> {
    let cols = m.shape()[1];
    assert_eq!(cols, x.len());
    m.data()
        .chunks(cols)
        .map(|row| {
            let mut acc = 0.0;
            for p in 0..cols {
                acc += x[p] * row[p];
            }
            acc
        })
        .collect()
}

fn zip(a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn cat(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().chain(b).copied().collect()
}

fn gru_ref(g: &dyn Fn(ParamId) -> Vec<f64>, m: &dyn Fn(ParamId) -> Tensor<f64>, p: &GruParams, x: &[f64], h: &[f64]) -> Vec<f64> {
    let gate = |w, u, b| {
        let pre = zip(&dot_rows(&m(w), x), &dot_rows(&m(u), h), |a, b| a + b);
        zip(&pre, &g(b), |a, b| sigmoid(a + b))
    };
    let z = gate(p.w_z, p.u_z, p.b_z);
    let r = gate(p.w_r, p.u_r, p.b_r);
    let gated = zip(&r, &dot_rows(&m(p.u_c), h), |a, b| a * b);
    let cand = zip(&dot_rows(&m(p.w_c), x), &gated, |a, b| (a + b).tanh());
    (0..h.len()).map(|j| z[j] * h[j] + (-z[j] + 1.0) * cand[j]).collect()
}

fn lstm_ref(
    g: &dyn Fn(ParamId) -> Vec<f64>,
    m: &dyn Fn(ParamId) -> Tensor<f64>,
    p: &LstmParams,
    x: &[f64],
    h: &[f64],
    c: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let pre = |w, u, b, peep: Option<(ParamId, &[f64])>| {
        let mut acc = zip(&dot_rows(&m(w), x), &dot_rows(&m(u), h), |a, b| a + b);
        if let Some((pid, cv)) = peep {
            acc = zip(&acc, &zip(cv, &g(pid), |a, b| a * b), |a, b| a + b);
        }
        zip(&acc, &g(b), |a, b| a + b)
    };
    let i: Vec<f64> = pre(p.w_ix, p.u_i, p.b_i, p.peepholes.map(|q| (q.0, c))).into_iter().map(sigmoid).collect();
    let f: Vec<f64> = pre(p.w_fx, p.u_f, p.b_f, p.peepholes.map(|q| (q.1, c))).into_iter().map(sigmoid).collect();
    let gg: Vec<f64> = pre(p.w_g, p.u_g, p.b_g, None).into_iter().map(f64::tanh).collect();
    let c_new = zip(&zip(&f, c, |a, b| a * b), &zip(&i, &gg, |a, b| a * b), |a, b| a + b);
    let o: Vec<f64> =
        pre(p.w_ox, p.u_o, p.b_o, p.peepholes.map(|q| (q.2, c_new.as_slice()))).into_iter().map(sigmoid).collect();
    let h_new = zip(&o, &c_new, |a, b| a * b.tanh());
    (h_new, c_new)
}

fn indrnn_ref(g: &dyn Fn(ParamId) -> Vec<f64>, m: &dyn Fn(ParamId) -> Tensor<f64>, p: &IndRnnParams, x: &[f64], h: &[f64]) -> Vec<f64> {
    let pre = zip(&dot_rows(&m(p.w), x), &zip(h, &g(p.u), |a, b| a * b), |a, b| a + b);
    zip(&pre, &g(p.b), |a, b| {
        let v = a + b;
        if v > 0.0 {
            v
        } else {
            0.0
        }
    })
}

/// Per-row, per-step scalar evaluation of a stacked RNN over `B×L×d`.
fn reference_unroll(store: &ParamStore<f64>, rnn: &Rnn, seq: &Tensor<f64>) -> Vec<f64> {
    let g = |id: ParamId| store.get(id).data().to_vec();
    let m = |id: ParamId| store.get(id).clone();
    let &[b, l, d] = seq.shape() else { panic!("rank") };
    let hidden = rnn.hidden();
    let mut out = Vec::new();
    for row in 0..b {
        let mut hs: Vec<Vec<f64>> = rnn.layers.iter().map(|c| vec![0.0; c.hidden()]).collect();
        let mut cs = hs.clone();
        let mut history: VecDeque<(Vec<f64>, Vec<f64>)> = VecDeque::new();
        let mut attns = vec![0.0; hidden];
        for t in 0..l {
            let x = seq.data()[(row * l + t) * d..(row * l + t + 1) * d].to_vec();
            let mut input = match &rnn.attention {
                Some(a) => zip(&dot_rows(&m(a.m_in), &cat(&x, &attns)), &g(a.b_in), |u, v| u + v),
                None => x,
            };
            for (k, cell) in rnn.layers.iter().enumerate() {
                match cell {
                    Cell::Gru(p) => hs[k] = gru_ref(&g, &m, p, &input, &hs[k]),
                    Cell::IndRnn(p) => hs[k] = indrnn_ref(&g, &m, p, &input, &hs[k]),
                    Cell::Lstm(p) => (hs[k], cs[k]) = lstm_ref(&g, &m, p, &input, &hs[k], &cs[k]),
                }
                input = hs[k].clone();
            }
            let Some(a) = &rnn.attention else {
                out.extend(input);
                continue;
            };
            let mut query = Vec::new();
            for (k, cell) in rnn.layers.iter().enumerate() {
                if matches!(cell, Cell::Lstm(_)) {
                    query.extend(&cs[k]);
                }
                query.extend(&hs[k]);
            }
            let atten = if history.is_empty() {
                vec![0.0; hidden]
            } else {
                let wq = dot_rows(&m(a.w2), &query);
                let scores: Vec<f64> = history
                    .iter()
                    .map(|(_, key)| dot_rows(&m(a.v), &zip(key, &wq, |u, v| (u + v).tanh()))[0])
                    .collect();
                let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                let mut p: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
                for &e in &p {
                    total += e;
                }
                for e in &mut p {
                    *e /= total;
                }
                let mut acc: Option<Vec<f64>> = None;
                for ((o, _), &pi) in history.iter().zip(&p) {
                    let term: Vec<f64> = o.iter().map(|v| v * pi).collect();
                    acc = Some(match acc {
                        None => term,
                        Some(prev) => zip(&prev, &term, |u, v| u + v),
                    });
                }
                acc.unwrap()
            };
            let o = zip(&dot_rows(&m(a.m_out), &cat(&input, &atten)), &g(a.b_out), |u, v| u + v);
            let key = dot_rows(&m(a.w1), &o);
            history.push_back((o.clone(), key));
            while history.len() > a.window {
                history.pop_front();
            }
            attns = atten;
            out.extend(o);
        }
    }
    out
}

fn cell_oracle() -> Result<String> {
    let mut r = rng(3);
    let mut kinds = [0usize; 3];
    let mut with_attention = 0;
    for i in 0..50 {
        let kind = [CellKind::Gru, CellKind::Lstm, CellKind::IndRnn][i % 3];
        let (b, l, h, d) = (r.random_range(1..=2), r.random_range(1..=6), r.random_range(1..=8), r.random_range(1..=8));
        let attention = r.random_bool(0.5).then(|| r.random_range(1..=4));
        let cfg = RnnConfig {
            cell: kind,
            layers: r.random_range(1..=2),
            hidden: h,
            peepholes: r.random_bool(0.7),
            attention,
            steps: l,
        };
        let mut store = ParamStore::<f64>::new();
        let rnn = Rnn::register(&mut store, "r", d, &cfg, &mut rng(i as u64))?;
        randomize(&mut store, 500 + i as u64);
        let seq = random(&mut r, &[b, l, d]);
        let mut s = Session::new(&store, NormMode::Training);
        let x = s.tape.constant(seq.clone());
        let y = rnn.unroll(&mut s, x)?;
        let got: Vec<u64> = s.tape.value(y).data().iter().map(|v| v.to_bits()).collect();
        let want: Vec<u64> = reference_unroll(&store, &rnn, &seq).iter().map(|v| v.to_bits()).collect();
        ensure!(got == want, "instance {i} ({cfg:?}, B={b}, L={l}, d={d}) differs from the scalar loop");
        kinds[i % 3] += 1;
        with_attention += attention.is_some() as usize;
    }
    Ok(format!(
        "50 instances bit-identical (gru {}, lstm {}, indrnn {}; {with_attention} with attention)",
        kinds[0], kinds[1], kinds[2]
    ))
}

// --------------------------------------------------------------- pipeline

fn record(id: &str, seed: u64) -> FrameRecord {
    let mut r = rng(seed);
    let image: Vec<u8> = (0..IMAGE_BYTES).map(|_| r.random()).collect();
    FrameRecord::new(id, image, r.random_range(-1000..=1000), r.random_range(-1000..=1000)).unwrap()
}

/// 1 to 3 videos with occasional frame gaps.
fn gappy_videos(seed: u64) -> Vec<FrameRecord> {
    let mut r = rng(seed);
    let mut out = Vec::new();
    for v in 0..r.random_range(1..4) {
        let mut k = 0;
        for _ in 0..r.random_range(5..40) {
            k += if r.random_bool(0.1) { r.random_range(2..200) } else { 1 };
            out.push(FrameRecord::new(format!("vid{v}/{k}"), vec![0; IMAGE_BYTES], 0, 0).unwrap());
        }
    }
    out
}

fn pipeline() -> Result<String> {
    let mut sequences = 0;
    for seed in 0..200u64 {
        let data = Arc::new(Dataset::from_records(gappy_videos(seed)));
        let l = 1 + (seed % 6) as usize;
        let cfg = if seed % 2 == 0 {
            LoaderConfig::training(l, 1 + (seed % 3) as usize, seed)
        } else {
            LoaderConfig::evaluation(l, 2)
        };
        let Ok(loader) = Loader::new(data, cfg) else { continue };
        for batch in loader.take(30) {
            for row in batch?.ids {
                ensure!(row.len() == l, "window of {} frames, expected {l}", row.len());
                let (v0, f0) = parse_frame_id(&row[0])?;
                let (v1, f1) = parse_frame_id(&row[l - 1])?;
                ensure!(v0 == v1, "window spans videos {v0} and {v1}");
                ensure!(f0.abs_diff(f1) <= 15 * l as u64, "window spans {} frames for L={l}", f0.abs_diff(f1));
                sequences += 1;
            }
        }
    }

    let mut eval_epochs = 0;
    for seed in 0..50u64 {
        let mut r = rng(seed);
        let l = r.random_range(1..6);
        let mut records = Vec::new();
        for v in 0..r.random_range(1..4) {
            for k in 1..=l * r.random_range(1..8) {
                records.push(FrameRecord::new(format!("v{v}/{k}"), vec![0; IMAGE_BYTES], 0, 0)?);
            }
        }
        let expected: Vec<String> = records.iter().map(|r| r.id.clone()).collect();
        let loader = Loader::new(Arc::new(Dataset::from_records(records)), LoaderConfig::evaluation(l, 2))?;
        let mut seen = Vec::new();
        for batch in loader {
            seen.extend(batch?.ids.into_iter().flatten());
        }
        ensure!(seen == expected, "eval epoch {seed} visited {} of {} records or out of order", seen.len(), expected.len());
        eval_epochs += 1;
    }

    for p in 0..=255u8 {
        ensure!(unscale_pixel(scale_pixel(p)) == p, "pixel {p} does not round-trip");
    }
    let mut images: Vec<u32> = (0..=255u8).map(|p| scale_pixel(p).to_bits()).collect();
    images.dedup();
    ensure!(images.len() == 256, "scale_pixel is not injective");

    let dir = tempfile::tempdir()?;
    let records: Vec<FrameRecord> = (1..=5).map(|k| record(&format!("clip/{k}"), k)).collect();
    let path = dir.path().join("clip.vasq");
    write_container(&path, &records)?;
    let first = std::fs::read(&path)?;
    let back = read_container(&path)?;
    ensure!(back == records, "records changed across the container");
    let path2 = dir.path().join("again.vasq");
    write_container(&path2, &back)?;
    ensure!(std::fs::read(&path2)? == first, "re-encoded container differs");
    ensure!(encode_container(&decode_container(&first, "clip")?)? == first, "decode/encode differs");

    let data: Vec<FrameRecord> = (0..3).flat_map(|v| (1..=40).map(move |k| record(&format!("v{v}/{k}"), v * 100 + k))).collect();
    let data = Arc::new(Dataset::from_records(data));
    let stream = |seed| -> Result<Vec<(Vec<Vec<String>>, Vec<u32>, Vec<u32>)>> {
        Loader::new(data.clone(), LoaderConfig::training(4, 2, seed))?
            .take(40)
            .map(|b| {
                let b = b?;
                Ok((b.ids, bits(&b.images), bits(&b.labels)))
            })
            .collect()
    };
    ensure!(stream(9)? == stream(9)?, "same seed gave different batch streams");
    ensure!(stream(9)? != stream(10)?, "different seeds gave identical batch streams");
    Ok(format!(
        "{sequences} windows pass the endpoint rule; {eval_epochs} eval epochs exact; bytes 0..255 bijective; container byte-identical; seeded stream bit-reproducible"
    ))
}

// --------------------------------------------------------------- matching

fn brute_force_match(entries: &[(f64, i32)], frames: usize) -> Vec<i32> {
    (1..=frames)
        .map(|k| {
            let t = k as f64 * FRAME_INTERVAL;
            let mut best = 0;
            for (i, e) in entries.iter().enumerate() {
                if (e.0 - t).abs() < (entries[best].0 - t).abs() {
                    best = i;
                }
            }
            entries[best].1
        })
        .collect()
}

fn matching() -> Result<String> {
    let mut r = rng(11);
    for i in 0..1000 {
        let mut t = 0.0;
        let entries: Vec<(f64, i32)> = (0..r.random_range(1..40))
            .map(|_| {
                t += r.random_range(0.001..0.2);
                (t, r.random_range(-1000..=1000))
            })
            .collect();
        let frames = r.random_range(1..200);
        let track = AnnotationTrack::new(Dimension::Valence, entries.clone())?;
        ensure!(match_track(&track, frames, FRAME_INTERVAL)? == brute_force_match(&entries, frames), "track {i} differs");
    }
    let stamps = [0.010, 0.030, 0.041, 0.057, 0.089, 0.102, 0.119];
    let table = AnnotationTrack::new(Dimension::Valence, stamps.iter().zip(121..).map(|(&t, v)| (t, v)).collect())?;
    let frame2 = match_track(&table, 3, FRAME_INTERVAL)?[1];
    ensure!(frame2 == 124, "frame 2 got {frame2}");
    Ok("1000 random tracks equal brute force; worked example frame 2 -> 124".into())
}

// -------------------------------------------------------------- partition

fn partition_fixture() -> Result<String> {
    let videos = common::census_fixture(1);
    let splits = partition(&videos, &common::CORPUS_TARGETS, 7)?;
    common::check_assignment(&videos, &splits, &common::CORPUS_TARGETS).map_err(anyhow::Error::msg)?;
    let sizes: Vec<usize> = Split::ALL.iter().map(|s| splits.iter().filter(|x| *x == s).count()).collect();
    ensure!(sizes == [103, 25, 31], "split sizes {sizes:?}");
    Ok(format!("159 videos -> {}/{}/{}; cells within 1; subject-disjoint; gender within 2", sizes[0], sizes[1], sizes[2]))
}

// ------------------------------------------------------------- end to end

fn e2e_model() -> ModelConfig {
    ModelConfig {
        image: 96,
        backbone: BackboneConfig::vgg_small(),
        rnn: RnnConfig { cell: CellKind::Gru, layers: 2, hidden: 128, attention: Some(30), ..RnnConfig::default() },
    }
}

struct Run {
    reached: Option<u64>,
    best: Checkpoint,
    elapsed: Duration,
    last: EvalRow,
}

/// Trains until held-out CCC reaches the target on both dimensions.
/// The returned checkpoint is the evaluation with the highest worse-dimension CCC.
fn run_until_target(case: Case, init_rnn: Option<PathBuf>, train: &Arc<Dataset>, held: &Arc<Dataset>, limit: u64) -> Result<Run> {
    let mut cfg = TrainConfig::new(e2e_model(), case);
    cfg.seq_len = 16;
    cfg.batch = 2;
    cfg.adam = AdamConfig::with_lr(1e-4);
    cfg.seed = E2E_SEED;
    cfg.log_every = 0;
    cfg.checkpoint_every = 0;
    cfg.init_rnn = init_rnn;
    let mut trainer = Trainer::new(cfg, train.clone())?;
    let start = Instant::now();
    let mut best: Option<(f64, Checkpoint)> = None;
    let mut reached = None;
    let mut last = None;
    trainer.run(limit, None, |t, _| {
        let step = t.global_step();
        if step % E2E_EVAL_EVERY != 0 {
            return Ok(ControlFlow::Continue(()));
        }
        let row = evaluate(&t.model, &t.store, held.clone(), 16, 2, step, "heldout")?;
        let worse = row.ccc_valence.min(row.ccc_arousal);
        if best.as_ref().is_none_or(|b| worse > b.0) {
            best = Some((worse, t.checkpoint()));
        }
        last = Some(row);
        if worse >= TARGET_CCC {
            reached = Some(step);
            return Ok(ControlFlow::Break(()));
        }
        Ok(ControlFlow::Continue(()))
    })?;
    Ok(Run {
        reached,
        best: best.context("no evaluation ran")?.1,
        elapsed: start.elapsed(),
        last: last.context("no evaluation ran")?,
    })
}

fn load_videos(dir: &Path, ids: std::ops::Range<usize>) -> Result<Arc<Dataset>> {
    let mut records = Vec::new();
    for v in ids {
        records.extend(read_container(&dir.join(format!("records/vid{v:03}.vasq")))?);
    }
    Ok(Arc::new(Dataset::from_records(records)))
}

fn end_to_end() -> Result<String> {
    let dir = tempfile::tempdir()?;
    synthesize(&SynthConfig { videos: 8, frames: 300, seed: 1 }, dir.path())?;
    let train = load_videos(dir.path(), 0..6)?;
    let held = load_videos(dir.path(), 6..8)?;

    let fresh = run_until_target(Case::Full, None, &train, &held, E2E_MAX_STEPS)?;
    let Some(case2) = fresh.reached else {
        bail!(
            "case 2 stopped at {} steps with held-out CCC {:.3}/{:.3}",
            fresh.last.step,
            fresh.last.ccc_valence,
            fresh.last.ccc_arousal
        );
    };
    ensure!(fresh.elapsed <= E2E_BUDGET, "case 2 took {:?}", fresh.elapsed);
    let source = dir.path().join("case2-best.vack");
    fresh.best.save(&source)?;

    let transfer = run_until_target(Case::RnnTransfer, Some(source), &train, &held, case2)?;
    let Some(case3) = transfer.reached else {
        bail!("case 3 did not reach {TARGET_CCC} within the {case2} steps case 2 needed");
    };
    ensure!(case3 < case2, "case 3 needed {case3} steps, case 2 {case2}");
    Ok(format!(
        "case 2 reached {TARGET_CCC} at step {case2} ({:.3}/{:.3}, {:.0} s); case 3 at step {case3} ({:.3}/{:.3}, {:.0} s); eval every {E2E_EVAL_EVERY}",
        fresh.last.ccc_valence,
        fresh.last.ccc_arousal,
        fresh.elapsed.as_secs_f64(),
        transfer.last.ccc_valence,
        transfer.last.ccc_arousal,
        transfer.elapsed.as_secs_f64()
    ))
}

// ------------------------------------------------------- strategy masks

fn tiny_model(attention: bool) -> ModelConfig {
    ModelConfig {
        image: 96,
        backbone: BackboneConfig::VggStyle { blocks: [2, 4, 4, 4, 4].map(|channels| VggBlock { convs: 1, channels }).to_vec() },
        rnn: RnnConfig { cell: CellKind::Gru, layers: 2, hidden: 6, attention: attention.then_some(3), ..RnnConfig::default() },
    }
}

fn bn_model() -> ModelConfig {
    ModelConfig { image: 96, backbone: BackboneConfig::resnet_small(), rnn: RnnConfig { hidden: 4, ..tiny_model(false).rnn } }
}

/// Brightness follows valence, channel spread follows arousal.
fn learnable_data(videos: usize, frames: u64, seed: u64) -> Arc<Dataset> {
    let mut r = rng(seed);
    let mut records = Vec::new();
    for v in 0..videos {
        let (pv, pa) = (r.random_range(0.0..6.0), r.random_range(0.0..6.0));
        for k in 1..=frames {
            let val = (600.0 * ((k as f64) / 9.0 + pv).sin()).round() as i64;
            let aro = (600.0 * ((k as f64) / 13.0 + pa).cos()).round() as i64;
            let (base, spread) = (128.0 + 0.1 * val as f64, 0.05 * aro as f64);
            let mut image = Vec::with_capacity(IMAGE_BYTES);
            for i in 0..IMAGE_BYTES / 3 {
                let noise = ((i * 7919 + k as usize) % 5) as f64 - 2.0;
                image.push((base + spread + noise).clamp(0.0, 255.0) as u8);
                image.push((base + noise).clamp(0.0, 255.0) as u8);
                image.push((base - spread + noise).clamp(0.0, 255.0) as u8);
            }
            records.push(FrameRecord::new(format!("v{v}/{k}"), image, val, aro).unwrap());
        }
    }
    Arc::new(Dataset::from_records(records))
}

fn small_config(model: ModelConfig, case: Case) -> TrainConfig {
    let mut c = TrainConfig::new(model, case);
    c.seq_len = 4;
    c.batch = 2;
    c.adam = AdamConfig::with_lr(1e-3);
    c.seed = 5;
    c.log_every = 0;
    c
}

fn keep_going(_: &Trainer, _: f64) -> vaseq::Result<ControlFlow<()>> {
    Ok(ControlFlow::Continue(()))
}

fn snapshot(store: &ParamStore<f32>) -> Vec<Vec<u32>> {
    store.entries().map(|(_, e)| bits(&e.value)).collect()
}

fn strategy_masks() -> Result<String> {
    let mut t = Trainer::new(small_config(tiny_model(false), Case::FrozenBackbone), learnable_data(2, 24, 2))?;
    let backbone = t.model.group(Group::Backbone);
    let before = snapshot(&t.store);
    t.run(10, None, keep_going)?;
    let after = snapshot(&t.store);
    for &id in &backbone {
        ensure!(before[id.0] == after[id.0], "case 0 changed {}", t.store.entry(id).name);
    }
    let rnn_moved = t.model.group(Group::Recurrent).iter().any(|id| before[id.0] != after[id.0]);
    ensure!(rnn_moved, "case 0 did not train the RNN");

    let mut t = Trainer::new(small_config(bn_model(), Case::LastConv), learnable_data(2, 16, 2))?;
    let before = snapshot(&t.store);
    t.run(2, None, keep_going)?;
    let after = snapshot(&t.store);
    let allowed: Vec<ParamId> =
        [Group::LastConv, Group::Recurrent, Group::Head].iter().flat_map(|&g| t.model.group(g)).collect();
    let mut changed = 0;
    for (id, e) in t.store.entries() {
        let moved = before[id.0] != after[id.0];
        ensure!(!moved || allowed.contains(&id), "case 1 changed {}", e.name);
        if t.model.group(Group::LastConv).contains(&id) && e.kind == ParamKind::Weight && e.name.ends_with("/w") {
            ensure!(moved, "case 1 did not train {}", e.name);
        }
        changed += moved as usize;
    }

    let dir = tempfile::tempdir()?;
    let data = learnable_data(2, 24, 4);
    let mut source = Trainer::new(small_config(tiny_model(true), Case::Full), data.clone())?;
    source.run(3, None, keep_going)?;
    let path = dir.path().join("source.vack");
    source.checkpoint().save(&path)?;
    let mut c = small_config(tiny_model(true), Case::RnnTransfer);
    c.init_rnn = Some(path);
    c.seed = 99;
    let t = Trainer::new(c, data)?;
    let rnn = t.model.group(Group::Recurrent);
    for &id in &rnn {
        ensure!(bits(t.store.get(id)) == bits(source.store.get(id)), "case 3 {} differs from source", t.store.entry(id).name);
    }
    Ok(format!(
        "case 0: {} backbone tensors unchanged over 10 steps; case 1: {changed} changed, all in last conv/RNN/FC; case 3: {} RNN tensors equal source",
        backbone.len(),
        rnn.len()
    ))
}

// ---------------------------------------------------------------- watcher

fn watcher() -> Result<String> {
    let dir = tempfile::tempdir()?;
    let data = learnable_data(1, 12, 2);
    let mut trainer = Trainer::new(small_config(tiny_model(false), Case::Full), data.clone())?;
    ModelManifest::new(trainer.config().model.clone()).write(dir.path())?;
    let stop = Arc::new(AtomicBool::new(false));
    let eval = {
        let (dir, stop, data) = (dir.path().to_path_buf(), stop.clone(), data.clone());
        std::thread::spawn(move || {
            let mut cfg = EvalLoopConfig::new(4, 2);
            cfg.poll = Duration::from_millis(1);
            eval_loop(&dir, data, &cfg, &stop, |_| Ok(()))
        })
    };
    let writer = CheckpointWriter { dir: dir.path().to_path_buf(), chunks: 16, pause: Duration::from_millis(10) };
    let mut expected = Vec::new();
    for _ in 0..6 {
        trainer.run(1, None, keep_going)?;
        writer.write(&trainer.checkpoint())?;
        let step = trainer.global_step();
        expected.push(evaluate(&trainer.model, &trainer.store, data.clone(), 4, 2, step, "validation")?);
    }
    stop.store(true, Ordering::SeqCst);
    let rows = eval.join().map_err(|_| anyhow::anyhow!("eval thread panicked"))??;
    let steps: Vec<u64> = rows.iter().map(|r| r.step).collect();
    let want: Vec<u64> = expected.iter().map(|r| r.step).collect();
    ensure!(steps == want, "evaluated steps {steps:?}, written {want:?}");
    for (got, want) in rows.iter().zip(&expected) {
        ensure!(got == want, "step {} scored {got:?}, full checkpoint scores {want:?}", got.step);
    }
    Ok(format!(
        "{} checkpoints written in {} delayed chunks each; every evaluation matches the complete checkpoint",
        rows.len(),
        writer.chunks
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Result<String>); 9] = [
        ("gradient suite", gradient_suite),
        ("ccc oracle", ccc_oracle),
        ("cell oracle", cell_oracle),
        ("pipeline", pipeline),
        ("matching", matching),
        ("partition", partition_fixture),
        ("end-to-end synthetic benchmark", end_to_end),
        ("strategy masks", strategy_masks),
        ("train/eval watcher", watcher),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("PASS {}. {name}: {detail}", i + 1),
            Err(e) => {
                failed += 1;
                println!("FAIL {}. {name}: {e:#}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
