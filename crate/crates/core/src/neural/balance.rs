//! NearMiss-1 undersampling for the breakage classifier's skewed labels.

use super::NeuralError;

/// Keep all positives plus the `ratio * positives` negatives whose mean
/// Euclidean distance to their three nearest positives is smallest.
/// Returns selected indices in ascending original order. Already-balanced
/// inputs are returned unchanged.
pub fn near_miss_undersample(
    features: &[Vec<f64>],
    labels: &[bool],
    ratio: f64,
) -> Result<Vec<usize>, NeuralError> {
    assert_eq!(features.len(), labels.len());
    let positives: Vec<usize> = (0..labels.len()).filter(|&i| labels[i]).collect();
    if positives.is_empty() {
        return Err(NeuralError::NoPositives);
    }
    let negatives: Vec<usize> = (0..labels.len()).filter(|&i| !labels[i]).collect();
    let keep_n = (ratio * positives.len() as f64).round() as usize;
    if negatives.len() <= keep_n {
        return Ok((0..labels.len()).collect());
    }

    // Mean distance to the 3 nearest positives, summed in ascending order
    // for a reproducible tie profile.
    let mut ranked: Vec<(f64, usize)> = negatives
        .iter()
        .map(|&n| {
            let mut dists: Vec<f64> = positives
                .iter()
                .map(|&p| euclidean(&features[n], &features[p]))
                .collect();
            dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let k = dists.len().min(3);
            let mean = dists[..k].iter().sum::<f64>() / k as f64;
            (mean, n)
        })
        .collect();
    ranked.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));

    let mut selected: Vec<usize> = positives;
    selected.extend(ranked[..keep_n].iter().map(|&(_, n)| n));
    selected.sort_unstable();
    Ok(selected)
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}
