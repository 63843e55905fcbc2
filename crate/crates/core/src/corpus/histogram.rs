use crate::error::{Error, Result};

/// Per-channel RGB histograms.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HistogramFeature {
    pub bins: usize,
    /// `[r, g, b]`, each of length `bins`.
    pub counts: [Vec<u32>; 3],
}

/// Histograms of interleaved RGB bytes; pixel `p` falls in bin `p·bins/256`.
pub fn histogram(rgb: &[u8], bins: usize) -> Result<HistogramFeature> {
    if !(2..=256).contains(&bins) {
        return Err(Error::Contract(format!("bin count {bins} outside 2..=256")));
    }
    if rgb.is_empty() || !rgb.len().is_multiple_of(3) {
        return Err(Error::Contract(format!("{} bytes is not a non-empty RGB image", rgb.len())));
    }
    let mut counts = [vec![0u32; bins], vec![0u32; bins], vec![0u32; bins]];
    for px in rgb.chunks_exact(3) {
        for (c, &p) in px.iter().enumerate() {
            counts[c][p as usize * bins / 256] += 1;
        }
    }
    Ok(HistogramFeature { bins, counts })
}

impl HistogramFeature {
    /// The three channel histograms, each divided by its pixel count, laid
    /// end to end.
    pub fn normalized(&self) -> Vec<f64> {
        self.counts
            .iter()
            .flat_map(|h| {
                let total: u64 = h.iter().map(|&c| c as u64).sum();
                h.iter().map(move |&c| c as f64 / total.max(1) as f64)
            })
            .collect()
    }
}

/// Correlation coefficient of the normalized histograms. Two flat vectors
/// score 1 when equal and 0 otherwise.
pub fn similarity(a: &HistogramFeature, b: &HistogramFeature) -> Result<f64> {
    if a.bins != b.bins {
        return Err(Error::Contract(format!("bin counts differ: {} vs {}", a.bins, b.bins)));
    }
    let (x, y) = (a.normalized(), b.normalized());
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&u, &v) in x.iter().zip(&y) {
        sxy += (u - mx) * (v - my);
        sxx += (u - mx) * (u - mx);
        syy += (v - my) * (v - my);
    }
    let denom = (sxx * syy).sqrt();
    if denom == 0.0 {
        return Ok(if x == y { 1.0 } else { 0.0 });
    }
    Ok(sxy / denom)
}

/// Index of the candidate most similar to the reference; ties go to the
/// lowest index.
pub fn pick_face(candidates: &[HistogramFeature], reference: &HistogramFeature) -> Result<usize> {
    if candidates.is_empty() {
        return Err(Error::Contract("no candidates to choose from".into()));
    }
    let mut best = (0, f64::NEG_INFINITY);
    for (i, c) in candidates.iter().enumerate() {
        let s = similarity(c, reference)?;
        if s > best.1 {
            best = (i, s);
        }
    }
    Ok(best.0)
}
