use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use vaseq::autodiff::{ConvSpec, NormMode, Tape, Tensor, Var};

/// Values in (−1, 1) on a jittered grid: any two differ by at least
/// `0.4/n` and none lies within `0.2/n` of zero, so max-pool windows have a
/// unique winner and ReLU inputs stay clear of the kink.
pub fn separated(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let mut slots: Vec<usize> = (0..n).collect();
    slots.shuffle(rng);
    let data = slots.into_iter().map(|k| (k as f64 + rng.random_range(0.1..0.9)) / n as f64 * 2.0 - 1.0).collect();
    Tensor::new(shape, data).unwrap()
}

pub type Builder = fn(&mut Tape<f64>, &[Var]) -> vaseq::Result<Var>;

/// Every differentiable op with a sampler for a valid input set.
pub fn op_cases() -> Vec<(&'static str, Vec<Vec<usize>>, Builder)> {
    vec![
        ("add", vec![vec![3, 4], vec![3, 4]], |t, v| t.add(v[0], v[1])),
        ("sub", vec![vec![3, 4], vec![3, 4]], |t, v| t.sub(v[0], v[1])),
        ("mul", vec![vec![3, 4], vec![3, 4]], |t, v| t.mul(v[0], v[1])),
        ("div_or_zero", vec![vec![3, 4], vec![3, 4]], |t, v| {
            let d = t.add_const(v[1], 3.0);
            t.div_or_zero(v[0], d)
        }),
        ("add_bias", vec![vec![2, 3, 4], vec![4]], |t, v| t.add_bias(v[0], v[1])),
        ("mul_last", vec![vec![2, 3, 4], vec![4]], |t, v| t.mul_last(v[0], v[1])),
        ("mul_column", vec![vec![3, 4], vec![3, 1]], |t, v| t.mul_column(v[0], v[1])),
        ("add_scalar", vec![vec![3, 4], vec![1]], |t, v| t.add_scalar(v[0], v[1])),
        ("mul_scalar", vec![vec![3, 4], vec![1]], |t, v| t.mul_scalar(v[0], v[1])),
        ("scale", vec![vec![3, 4]], |t, v| Ok(t.scale(v[0], -2.5))),
        ("add_const", vec![vec![3, 4]], |t, v| Ok(t.add_const(v[0], 0.7))),
        ("matmul", vec![vec![3, 4], vec![4, 2]], |t, v| t.matmul(v[0], v[1])),
        ("matmul_nt", vec![vec![3, 4], vec![2, 4]], |t, v| t.matmul_nt(v[0], v[1])),
        ("sigmoid", vec![vec![3, 4]], |t, v| Ok(t.sigmoid(v[0]))),
        ("tanh", vec![vec![3, 4]], |t, v| Ok(t.tanh(v[0]))),
        ("relu", vec![vec![3, 4]], |t, v| Ok(t.relu(v[0]))),
        ("softmax", vec![vec![3, 4]], |t, v| Ok(t.softmax(v[0]))),
        ("cross_entropy", vec![vec![3, 4]], |t, v| t.cross_entropy(v[0], &[0, 3, 1])),
        ("conv2d", vec![vec![2, 4, 4, 2], vec![3, 3, 3, 2], vec![3]], |t, v| {
            t.conv2d(v[0], ConvSpec::square(3, 1, 1, 2, 3), v[1], v[2])
        }),
        ("conv2d_strided", vec![vec![1, 5, 5, 2], vec![2, 3, 3, 2], vec![2]], |t, v| {
            t.conv2d(v[0], ConvSpec::square(3, 2, 0, 2, 2), v[1], v[2])
        }),
        ("conv2d_pointwise", vec![vec![2, 3, 3, 3], vec![2, 1, 1, 3], vec![2]], |t, v| {
            t.conv2d(v[0], ConvSpec::square(1, 1, 0, 3, 2), v[1], v[2])
        }),
        ("maxpool2d", vec![vec![2, 4, 4, 2]], |t, v| t.maxpool2d(v[0], 2, 2)),
        ("avgpool2d", vec![vec![2, 4, 4, 2]], |t, v| t.avgpool2d(v[0], 2, 2)),
        ("batchnorm", vec![vec![5, 3], vec![3], vec![3]], |t, v| {
            Ok(t.batchnorm(v[0], v[1], v[2], NormMode::Training, 1e-5, (&[], &[]))?.0)
        }),
        ("reshape", vec![vec![3, 4]], |t, v| t.reshape(v[0], &[2, 6])),
        ("concat", vec![vec![3, 2], vec![3, 3]], |t, v| t.concat(&[v[0], v[1]])),
        ("slice_last", vec![vec![3, 5]], |t, v| t.slice_last(v[0], 1, 3)),
        ("select_step", vec![vec![2, 3, 4]], |t, v| t.select_step(v[0], 1)),
        ("stack", vec![vec![2, 3], vec![2, 3]], |t, v| t.stack(&[v[0], v[1]])),
        ("sum", vec![vec![3, 4]], |t, v| Ok(t.sum(v[0]))),
        ("mean", vec![vec![3, 4]], |t, v| Ok(t.mean(v[0]))),
    ]
}
