//! Synthetic labeled datasets and non-IID client partitions.
//!
//! Class-conditional Gaussians stand in for image data: class `c` of `M` is an
//! isotropic unit-variance Gaussian whose mean sits on a circle of radius
//! `separation` in coordinates `(0, 1)`. Partitioners reproduce the non-IID
//! regimes the simulator studies: majority-class label skew with fraction `p`,
//! concept shift via feature rotation per latent client group, quantity skew
//! with power-law client sizes, and plain IID.
//!
//! All generators are pure functions of `(seed, args)`.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One labeled observation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: usize,
}

/// One client's local data, split into train/validation/test.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientPartition {
    pub client_id: usize,
    pub train: Vec<Sample>,
    pub validation: Vec<Sample>,
    pub test: Vec<Sample>,
}

impl ClientPartition {
    /// Number of local training samples (the aggregation weight n_k).
    pub fn n_k(&self) -> usize {
        self.train.len()
    }

    fn all_samples(&self) -> Vec<Sample> {
        let mut out = Vec::with_capacity(self.train.len() + self.validation.len() + self.test.len());
        out.extend(self.train.iter().cloned());
        out.extend(self.validation.iter().cloned());
        out.extend(self.test.iter().cloned());
        out
    }
}

/// Non-IID regime selector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SkewSpec {
    /// Every client draws labels uniformly.
    Iid,
    /// Each client's `n_majority` majority classes make up an expected
    /// fraction `p` of its samples; the rest is uniform over the others.
    LabelSkew { p: f64, n_majority: usize },
    /// Clients fall into latent groups; group `g` sees features rotated by
    /// `angles[g]` in coordinates (0, 1). Labels are drawn uniformly.
    ConceptShift { angles: Vec<f64> },
    /// Client sizes proportional to `rank^(-exponent)`.
    QuantitySkew { exponent: f64 },
}

/// Rotation angles for `groups` latent concept groups, evenly spaced over
/// `[0, pi)`: two groups give 0 and 90 degrees.
pub fn concept_group_angles(groups: usize) -> Vec<f64> {
    (0..groups).map(|g| g as f64 * PI / groups as f64).collect()
}

/// Latent concept group of a client under round-robin assignment.
pub fn concept_group(client_id: usize, groups: usize) -> usize {
    client_id % groups
}

/// Majority classes of a client under round-robin pair assignment:
/// client 0 gets (0, 1), client 1 gets (2, 3), wrapping around.
pub fn majority_classes(client_id: usize, n_classes: usize, n_majority: usize) -> Vec<usize> {
    let start = (client_id * n_majority) % n_classes;
    (0..n_majority).map(|i| (start + i) % n_classes).collect()
}

/// Mean of class `c`: a point on the circle of radius `separation` in
/// coordinates (0, 1), remaining coordinates zero.
pub fn class_mean(class: usize, n_classes: usize, dim: usize, separation: f64) -> Vec<f64> {
    let angle = 2.0 * PI * class as f64 / n_classes as f64;
    let mut mean = vec![0.0; dim];
    mean[0] = separation * angle.cos();
    mean[1] = separation * angle.sin();
    mean
}

/// Generates `n_classes * n_per_class` samples, grouped by class, each class
/// an isotropic unit-variance Gaussian around [`class_mean`].
pub fn generate_base_dataset(
    seed: u64,
    n_classes: usize,
    dim: usize,
    n_per_class: usize,
    separation: f64,
) -> Result<Vec<Sample>> {
    if n_classes < 2 {
        return Err(Error::config("data requires at least 2 classes"));
    }
    if dim < 2 {
        return Err(Error::config("data requires dimension >= 2"));
    }
    if n_per_class == 0 {
        return Err(Error::config("data requires n_per_class >= 1"));
    }
    if !(separation > 0.0) {
        return Err(Error::config("class separation must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(n_classes * n_per_class);
    for class in 0..n_classes {
        let mean = class_mean(class, n_classes, dim, separation);
        for _ in 0..n_per_class {
            let features = mean
                .iter()
                .map(|m| m + rng.sample::<f64, _>(StandardNormal))
                .collect();
            samples.push(Sample {
                features,
                label: class,
            });
        }
    }
    Ok(samples)
}

/// Rotates every feature vector by `angle` in coordinates (0, 1); labels and
/// the remaining coordinates are untouched.
pub fn apply_concept_shift(samples: &[Sample], angle: f64) -> Result<Vec<Sample>> {
    let (sin, cos) = angle.sin_cos();
    samples
        .iter()
        .map(|s| {
            if s.features.len() < 2 {
                return Err(Error::config("concept shift requires dimension >= 2"));
            }
            let mut features = s.features.clone();
            let (x0, x1) = (features[0], features[1]);
            features[0] = cos * x0 - sin * x1;
            features[1] = sin * x0 + cos * x1;
            Ok(Sample {
                features,
                label: s.label,
            })
        })
        .collect()
}

fn class_pools(samples: &[Sample]) -> Result<Vec<Vec<&Sample>>> {
    let n_classes = samples.iter().map(|s| s.label).max().map_or(0, |m| m + 1);
    let mut pools: Vec<Vec<&Sample>> = vec![Vec::new(); n_classes];
    for s in samples {
        pools[s.label].push(s);
    }
    if pools.iter().any(|p| p.is_empty()) {
        return Err(Error::config("every class must have at least one sample"));
    }
    Ok(pools)
}

/// Per-draw class distribution for one client.
enum ClassDraw {
    Uniform,
    Mixture { majority: Vec<usize>, p: f64 },
}

fn draw_client_samples<R: Rng>(
    pools: &[Vec<&Sample>],
    dist: &ClassDraw,
    count: usize,
    rng: &mut R,
) -> Vec<Sample> {
    let n_classes = pools.len();
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let class = match dist {
            ClassDraw::Uniform => rng.gen_range(0..n_classes),
            ClassDraw::Mixture { majority, p } => {
                if rng.gen::<f64>() < *p {
                    majority[rng.gen_range(0..majority.len())]
                } else {
                    // Uniform over the non-majority classes.
                    let others = n_classes - majority.len();
                    let mut idx = rng.gen_range(0..others);
                    let mut class = 0;
                    loop {
                        if !majority.contains(&class) {
                            if idx == 0 {
                                break;
                            }
                            idx -= 1;
                        }
                        class += 1;
                    }
                    class
                }
            }
        };
        let pool = &pools[class];
        out.push(pool[rng.gen_range(0..pool.len())].clone());
    }
    out
}

fn partition_from_train(client_id: usize, train: Vec<Sample>) -> ClientPartition {
    ClientPartition {
        client_id,
        train,
        validation: Vec::new(),
        test: Vec::new(),
    }
}

/// Majority-class label skew: each client draws `per_client_n` samples with
/// replacement; with probability `p` the label comes uniformly from the
/// client's majority classes, otherwise uniformly from the remaining ones.
/// Majority classes follow the round-robin assignment of [`majority_classes`],
/// so same-majority client groups exist by construction.
pub fn partition_label_skew(
    samples: &[Sample],
    n_clients: usize,
    p: f64,
    n_majority: usize,
    per_client_n: usize,
    seed: u64,
) -> Result<Vec<ClientPartition>> {
    let pools = class_pools(samples)?;
    let n_classes = pools.len();
    if n_majority == 0 || n_majority >= n_classes {
        return Err(Error::config(
            "n_majority must be at least 1 and smaller than the number of classes",
        ));
    }
    let p_min = n_majority as f64 / n_classes as f64;
    if !(p >= p_min && p <= 1.0) {
        return Err(Error::config(format!(
            "majority fraction p={p} out of range [{p_min}, 1]"
        )));
    }
    if n_clients == 0 || per_client_n == 0 {
        return Err(Error::config("need at least one client and one sample per client"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n_clients)
        .map(|k| {
            let dist = ClassDraw::Mixture {
                majority: majority_classes(k, n_classes, n_majority),
                p,
            };
            partition_from_train(k, draw_client_samples(&pools, &dist, per_client_n, &mut rng))
        })
        .collect())
}

/// IID partitioning: uniform label draws with replacement for every client.
pub fn partition_iid(
    samples: &[Sample],
    n_clients: usize,
    per_client_n: usize,
    seed: u64,
) -> Result<Vec<ClientPartition>> {
    let pools = class_pools(samples)?;
    if n_clients == 0 || per_client_n == 0 {
        return Err(Error::config("need at least one client and one sample per client"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n_clients)
        .map(|k| {
            partition_from_train(
                k,
                draw_client_samples(&pools, &ClassDraw::Uniform, per_client_n, &mut rng),
            )
        })
        .collect())
}

/// Concept-shift partitioning: IID label draws, then each client's features
/// are rotated by its latent group's angle (round-robin group assignment).
pub fn partition_concept_shift(
    samples: &[Sample],
    n_clients: usize,
    angles: &[f64],
    per_client_n: usize,
    seed: u64,
) -> Result<Vec<ClientPartition>> {
    if angles.is_empty() {
        return Err(Error::config("concept shift requires at least one group"));
    }
    let base = partition_iid(samples, n_clients, per_client_n, seed)?;
    base.into_iter()
        .map(|part| {
            let angle = angles[concept_group(part.client_id, angles.len())];
            Ok(ClientPartition {
                train: apply_concept_shift(&part.train, angle)?,
                ..part
            })
        })
        .collect()
}

/// Quantity skew: the sample pool is shuffled and split into contiguous
/// chunks whose sizes are proportional to `rank^(-exponent)` (rank 1-based),
/// rounded by largest remainder so that every sample is assigned exactly once.
pub fn partition_quantity_skew(
    samples: &[Sample],
    n_clients: usize,
    exponent: f64,
    seed: u64,
) -> Result<Vec<ClientPartition>> {
    if exponent < 0.0 {
        return Err(Error::config("quantity-skew exponent must be non-negative"));
    }
    if n_clients == 0 || samples.len() < n_clients {
        return Err(Error::config("need at least one sample per client"));
    }
    let weights: Vec<f64> = (1..=n_clients).map(|r| (r as f64).powf(-exponent)).collect();
    let total_weight: f64 = weights.iter().sum();
    let n = samples.len();
    let raw: Vec<f64> = weights.iter().map(|w| n as f64 * w / total_weight).collect();
    let mut sizes: Vec<usize> = raw.iter().map(|r| r.floor() as usize).collect();
    let assigned: usize = sizes.iter().sum();
    // Hand out the remainder by largest fractional part, lowest rank first on ties.
    let mut order: Vec<usize> = (0..n_clients).collect();
    order.sort_by(|&a, &b| {
        let fa = raw[a] - raw[a].floor();
        let fb = raw[b] - raw[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &k in order.iter().take(n - assigned) {
        sizes[k] += 1;
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices: Vec<usize> = (0..n).collect();
    indices.shuffle(&mut rng);
    let mut offset = 0;
    Ok(sizes
        .iter()
        .enumerate()
        .map(|(k, &size)| {
            let train = indices[offset..offset + size]
                .iter()
                .map(|&i| samples[i].clone())
                .collect();
            offset += size;
            partition_from_train(k, train)
        })
        .collect())
}

/// Splits a client's pooled samples into train/validation/test.
///
/// Counts are `round(fraction * n)` for validation and test, the rest train.
/// When every label present has at least 3 samples the split is stratified
/// per label; otherwise it is a plain shuffled split.
pub fn split_train_val_test(
    partition: &ClientPartition,
    val_fraction: f64,
    test_fraction: f64,
    seed: u64,
) -> Result<ClientPartition> {
    if !(val_fraction > 0.0 && test_fraction > 0.0 && val_fraction + test_fraction < 1.0) {
        return Err(Error::config(
            "split fractions must be positive and sum to less than 1",
        ));
    }
    let pool = partition.all_samples();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut by_label: BTreeMap<usize, Vec<Sample>> = BTreeMap::new();
    for s in &pool {
        by_label.entry(s.label).or_default().push(s.clone());
    }
    let stratified = by_label.values().all(|g| g.len() >= 3);

    let mut train = Vec::new();
    let mut validation = Vec::new();
    let mut test = Vec::new();
    let mut split_group = |group: &mut Vec<Sample>, rng: &mut ChaCha8Rng| {
        group.shuffle(rng);
        let n = group.len();
        let n_val = (val_fraction * n as f64).round() as usize;
        let n_test = (test_fraction * n as f64).round() as usize;
        let n_reserved = (n_val + n_test).min(n);
        for (i, s) in group.drain(..).enumerate() {
            if i < n_val.min(n_reserved) {
                validation.push(s);
            } else if i < n_reserved {
                test.push(s);
            } else {
                train.push(s);
            }
        }
    };
    if stratified {
        for (_, mut group) in by_label {
            split_group(&mut group, &mut rng);
        }
    } else {
        let mut all = pool;
        split_group(&mut all, &mut rng);
    }

    if train.is_empty() || validation.is_empty() || test.is_empty() {
        return Err(Error::config(format!(
            "client {} split produced an empty subset",
            partition.client_id
        )));
    }
    Ok(ClientPartition {
        client_id: partition.client_id,
        train,
        validation,
        test,
    })
}

#[derive(Serialize, Deserialize)]
struct SampleRecord {
    client_id: usize,
    split: String,
    label: usize,
    features: Vec<f64>,
}

/// Writes partitions as JSON-lines, one sample per line, for cross-language
/// reproduction: `{"client_id":0,"split":"train","label":3,"features":[..]}`.
pub fn export_partitions<W: Write>(partitions: &[ClientPartition], mut writer: W) -> Result<()> {
    for part in partitions {
        for (split, samples) in [
            ("train", &part.train),
            ("validation", &part.validation),
            ("test", &part.test),
        ] {
            for s in samples {
                let record = SampleRecord {
                    client_id: part.client_id,
                    split: split.to_string(),
                    label: s.label,
                    features: s.features.clone(),
                };
                serde_json::to_writer(&mut writer, &record)?;
                writer.write_all(b"\n")?;
            }
        }
    }
    Ok(())
}

/// Reads partitions back from the JSON-lines format of [`export_partitions`].
pub fn import_partitions<R: BufRead>(reader: R) -> Result<Vec<ClientPartition>> {
    let mut by_client: BTreeMap<usize, ClientPartition> = BTreeMap::new();
    for (line_no, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: SampleRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Format(format!("line {}: {e}", line_no + 1)))?;
        let part = by_client
            .entry(record.client_id)
            .or_insert_with(|| partition_from_train(record.client_id, Vec::new()));
        let sample = Sample {
            features: record.features,
            label: record.label,
        };
        match record.split.as_str() {
            "train" => part.train.push(sample),
            "validation" => part.validation.push(sample),
            "test" => part.test.push(sample),
            other => {
                return Err(Error::Format(format!(
                    "line {}: unknown split {other:?}",
                    line_no + 1
                )))
            }
        }
    }
    Ok(by_client.into_values().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn base_dataset_counts_and_labels() {
        let samples = generate_base_dataset(1, 2, 2, 5, 4.0).unwrap();
        assert_eq!(samples.len(), 10);
        assert_eq!(samples.iter().filter(|s| s.label == 0).count(), 5);
        assert_eq!(samples.iter().filter(|s| s.label == 1).count(), 5);
        assert!(samples.iter().all(|s| s.features.iter().all(|f| f.is_finite())));
    }

    #[test]
    fn base_dataset_is_deterministic() {
        let a = generate_base_dataset(1, 3, 4, 7, 2.0).unwrap();
        let b = generate_base_dataset(1, 3, 4, 7, 2.0).unwrap();
        assert_eq!(a, b);
        let c = generate_base_dataset(2, 3, 4, 7, 2.0).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn base_dataset_rejects_bad_dimensions() {
        assert!(generate_base_dataset(1, 1, 2, 5, 4.0).is_err());
        assert!(generate_base_dataset(1, 2, 1, 5, 4.0).is_err());
        assert!(generate_base_dataset(1, 2, 2, 0, 4.0).is_err());
        assert!(generate_base_dataset(1, 2, 2, 5, 0.0).is_err());
    }

    #[test]
    fn well_separated_classes_are_linearly_separable() {
        // Oracle: train this crate's own linear model on the generated data and
        // check it fits nearly perfectly.
        use crate::models::{self, ArchSpec, LocalOptimizer, ModelParams};
        use rand::SeedableRng;

        let samples = generate_base_dataset(1, 3, 2, 200, 6.0).unwrap();
        let arch = ArchSpec::linear(2, 3);
        let params = ModelParams::init(arch, 5);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let trained = models::local_update(
            &params,
            &samples,
            30,
            32,
            &LocalOptimizer::Sgd { lr: 0.5 },
            &mut rng,
        )
        .unwrap();
        let correct = samples
            .iter()
            .filter(|s| {
                let probs = models::forward(&trained, &s.features).unwrap();
                let pred = probs
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .unwrap()
                    .0;
                pred == s.label
            })
            .count();
        let accuracy = correct as f64 / samples.len() as f64;
        assert!(accuracy > 0.95, "accuracy {accuracy}");
    }

    #[test]
    fn zero_rotation_is_identity() {
        let samples = generate_base_dataset(3, 2, 3, 4, 4.0).unwrap();
        assert_eq!(apply_concept_shift(&samples, 0.0).unwrap(), samples);
    }

    #[test]
    fn pi_rotation_twice_is_identity_within_tolerance() {
        let samples = generate_base_dataset(4, 2, 3, 10, 4.0).unwrap();
        let twice =
            apply_concept_shift(&apply_concept_shift(&samples, PI).unwrap(), PI).unwrap();
        for (a, b) in twice.iter().zip(&samples) {
            assert_eq!(a.label, b.label);
            for (x, y) in a.features.iter().zip(&b.features) {
                assert!((x - y).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn quarter_rotation_maps_axes() {
        let samples = vec![Sample {
            features: vec![1.0, 0.0, 0.7],
            label: 0,
        }];
        let rotated = apply_concept_shift(&samples, PI / 2.0).unwrap();
        assert!((rotated[0].features[0]).abs() <= 1e-12);
        assert!((rotated[0].features[1] - 1.0).abs() <= 1e-12);
        assert_eq!(rotated[0].features[2], 0.7);
    }

    #[test]
    fn rotation_preserves_plane_norm_and_labels() {
        let samples = generate_base_dataset(8, 3, 4, 20, 3.0).unwrap();
        let rotated = apply_concept_shift(&samples, 1.234).unwrap();
        for (a, b) in samples.iter().zip(&rotated) {
            assert_eq!(a.label, b.label);
            let na = (a.features[0].powi(2) + a.features[1].powi(2)).sqrt();
            let nb = (b.features[0].powi(2) + b.features[1].powi(2)).sqrt();
            assert!((na - nb).abs() <= 1e-9);
            assert_eq!(a.features[2..], b.features[2..]);
        }
    }

    #[test]
    fn majority_pairs_rotate_round_robin() {
        assert_eq!(majority_classes(0, 10, 2), vec![0, 1]);
        assert_eq!(majority_classes(1, 10, 2), vec![2, 3]);
        assert_eq!(majority_classes(4, 10, 2), vec![8, 9]);
        assert_eq!(majority_classes(5, 10, 2), vec![0, 1]);
    }

    #[test]
    fn label_skew_rejects_out_of_range_p() {
        let samples = generate_base_dataset(1, 10, 2, 20, 4.0).unwrap();
        assert!(partition_label_skew(&samples, 4, 0.1, 2, 50, 1).is_err());
        assert!(partition_label_skew(&samples, 4, 1.1, 2, 50, 1).is_err());
        assert!(partition_label_skew(&samples, 4, 0.5, 10, 50, 1).is_err());
    }

    #[test]
    fn label_skew_at_p_equals_point_two_is_uniform() {
        // With M=10 and two majority classes at p=0.2, every class has
        // sampling probability 0.1; check empirically at scale.
        let samples = generate_base_dataset(1, 10, 2, 50, 4.0).unwrap();
        let parts = partition_label_skew(&samples, 2, 0.2, 2, 20_000, 7).unwrap();
        for part in &parts {
            let mut counts = vec![0usize; 10];
            for s in &part.train {
                counts[s.label] += 1;
            }
            for &c in &counts {
                let freq = c as f64 / part.train.len() as f64;
                assert!((freq - 0.1).abs() < 0.01, "freq {freq}");
            }
        }
    }

    #[test]
    fn pathological_skew_gives_only_majority_classes() {
        let samples = generate_base_dataset(2, 10, 2, 30, 4.0).unwrap();
        let parts = partition_label_skew(&samples, 10, 1.0, 2, 500, 3).unwrap();
        for part in &parts {
            let majority = majority_classes(part.client_id, 10, 2);
            assert_eq!(part.n_k(), 500);
            assert!(part.train.iter().all(|s| majority.contains(&s.label)));
        }
    }

    #[test]
    fn label_skew_counts_pass_chi_squared_against_mixture() {
        // Multinomial oracle: majority classes expect p/2 each, the other
        // eight (1-p)/8 each. Chi-squared with 9 degrees of freedom at
        // alpha = 0.01 has critical value 21.666.
        let samples = generate_base_dataset(3, 10, 2, 200, 4.0).unwrap();
        let n = 1000;
        let parts = partition_label_skew(&samples, 4, 0.6, 2, n, 11).unwrap();
        for part in &parts {
            let majority = majority_classes(part.client_id, 10, 2);
            let mut counts = vec![0f64; 10];
            for s in &part.train {
                counts[s.label] += 1.0;
            }
            let mut chi2 = 0.0;
            for class in 0..10 {
                let expected = if majority.contains(&class) {
                    n as f64 * 0.6 / 2.0
                } else {
                    n as f64 * 0.4 / 8.0
                };
                chi2 += (counts[class] - expected).powi(2) / expected;
            }
            assert!(chi2 < 21.666, "chi2 {chi2} for client {}", part.client_id);
        }
    }

    #[test]
    fn quantity_skew_uniform_case() {
        let samples = generate_base_dataset(5, 2, 2, 200, 4.0).unwrap();
        let parts = partition_quantity_skew(&samples, 4, 0.0, 1).unwrap();
        assert!(parts.iter().all(|p| p.n_k() == 100));
    }

    #[test]
    fn quantity_skew_harmonic_ratio() {
        let samples = generate_base_dataset(5, 2, 2, 200, 4.0).unwrap();
        let parts = partition_quantity_skew(&samples, 2, 1.0, 1).unwrap();
        assert_eq!(parts[0].n_k(), 267);
        assert_eq!(parts[1].n_k(), 133);
    }

    #[test]
    fn quantity_skew_conserves_samples() {
        let samples = generate_base_dataset(6, 3, 2, 111, 4.0).unwrap();
        for exponent in [0.0, 0.7, 2.0] {
            let parts = partition_quantity_skew(&samples, 5, exponent, 2).unwrap();
            let total: usize = parts.iter().map(|p| p.n_k()).sum();
            assert_eq!(total, samples.len());
            // No duplication: the pool is split, not resampled.
            let mut seen: Vec<_> = parts
                .iter()
                .flat_map(|p| p.train.iter().map(|s| format!("{:?}", s.features)))
                .collect();
            seen.sort();
            seen.dedup();
            assert_eq!(seen.len(), samples.len());
        }
    }

    #[test]
    fn split_produces_expected_counts() {
        let samples = generate_base_dataset(7, 2, 2, 50, 4.0).unwrap();
        let part = partition_from_train(0, samples);
        let split = split_train_val_test(&part, 0.2, 0.2, 5).unwrap();
        assert_eq!(split.train.len(), 60);
        assert_eq!(split.validation.len(), 20);
        assert_eq!(split.test.len(), 20);
    }

    #[test]
    fn split_is_deterministic_and_disjoint() {
        let samples = generate_base_dataset(9, 3, 2, 40, 4.0).unwrap();
        let part = partition_from_train(1, samples);
        let a = split_train_val_test(&part, 0.25, 0.15, 42).unwrap();
        let b = split_train_val_test(&part, 0.25, 0.15, 42).unwrap();
        assert_eq!(a, b);
        let total = a.train.len() + a.validation.len() + a.test.len();
        assert_eq!(total, 120);
        // Disjointness: every pooled sample lands in exactly one split, so the
        // multiset union must equal the pool.
        let mut pooled: Vec<String> = a
            .train
            .iter()
            .chain(&a.validation)
            .chain(&a.test)
            .map(|s| format!("{:?}:{}", s.features, s.label))
            .collect();
        pooled.sort();
        let mut original: Vec<String> = part
            .train
            .iter()
            .map(|s| format!("{:?}:{}", s.features, s.label))
            .collect();
        original.sort();
        assert_eq!(pooled, original);
    }

    #[test]
    fn stratified_split_keeps_label_proportions() {
        let samples = generate_base_dataset(10, 4, 2, 25, 4.0).unwrap();
        let part = partition_from_train(0, samples);
        let split = split_train_val_test(&part, 0.2, 0.2, 3).unwrap();
        for label in 0..4 {
            let in_train = split.train.iter().filter(|s| s.label == label).count() as f64;
            // 25 samples per label, overall train fraction 0.6.
            assert!((in_train - 15.0).abs() <= 1.0, "label {label}: {in_train}");
        }
    }

    #[test]
    fn split_rejects_bad_fractions() {
        let samples = generate_base_dataset(11, 2, 2, 10, 4.0).unwrap();
        let part = partition_from_train(0, samples);
        assert!(split_train_val_test(&part, 0.0, 0.2, 1).is_err());
        assert!(split_train_val_test(&part, 0.6, 0.5, 1).is_err());
    }

    #[test]
    fn split_rejects_empty_outcome() {
        let part = partition_from_train(
            0,
            vec![Sample {
                features: vec![0.0, 0.0],
                label: 0,
            }],
        );
        assert!(split_train_val_test(&part, 0.2, 0.2, 1).is_err());
    }

    #[test]
    fn jsonl_round_trip_preserves_partitions() {
        let samples = generate_base_dataset(12, 3, 3, 30, 4.0).unwrap();
        let parts: Vec<ClientPartition> = partition_iid(&samples, 3, 40, 9)
            .unwrap()
            .iter()
            .map(|p| split_train_val_test(p, 0.2, 0.2, 13).unwrap())
            .collect();
        let mut buf = Vec::new();
        export_partitions(&parts, &mut buf).unwrap();
        let restored = import_partitions(buf.as_slice()).unwrap();
        assert_eq!(parts, restored);
    }

    #[test]
    fn jsonl_import_rejects_garbage() {
        assert!(import_partitions("not json\n".as_bytes()).is_err());
        let bad_split = r#"{"client_id":0,"split":"holdout","label":0,"features":[1.0,2.0]}"#;
        assert!(import_partitions(bad_split.as_bytes()).is_err());
    }

    #[test]
    fn concept_shift_partition_rotates_by_group() {
        let samples = generate_base_dataset(13, 2, 2, 100, 6.0).unwrap();
        let angles = concept_group_angles(2);
        assert!((angles[1] - PI / 2.0).abs() < 1e-12);
        let parts = partition_concept_shift(&samples, 4, &angles, 50, 17).unwrap();
        // Group-0 clients keep the original class geometry; group-1 clients see
        // it rotated, so their class-0 means differ markedly.
        let mean_x0 = |part: &ClientPartition| {
            let class0: Vec<&Sample> = part.train.iter().filter(|s| s.label == 0).collect();
            class0.iter().map(|s| s.features[0]).sum::<f64>() / class0.len() as f64
        };
        assert!(mean_x0(&parts[0]) > 3.0);
        assert!(mean_x0(&parts[1]).abs() < 3.0);
        assert_eq!(concept_group(2, 2), 0);
        assert_eq!(concept_group(3, 2), 1);
    }
}
