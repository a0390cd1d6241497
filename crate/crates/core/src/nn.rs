//! Integer-only neural-network evaluation: model shapes, weight/bias
//! parameter blocks, the dense forward pass with ReLU, argmax prediction,
//! and accuracy scoring.
//!
//! Everything runs on [`FixedPoint`] values — no floating point anywhere —
//! so evaluation is bit-identical across platforms and runs. The final layer
//! emits raw scores (no activation); labels decode by argmax with ties going
//! to the lowest index.

use thiserror::Error;

use crate::fixed::{FixedError, FixedPoint, Mantissa};
use crate::hashing::DataPoint;
use crate::Address;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NnError {
    #[error("model needs at least two layers (input and output), got {got}")]
    TooFewLayers { got: usize },
    #[error("layer {layer} has size 0; every layer needs at least one unit")]
    EmptyLayer { layer: usize },
    #[error("{what} shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("input length {got} does not match input dimension {expected}")]
    BadInputLength { expected: usize, got: usize },
    #[error("accuracy of an empty dataset is undefined")]
    EmptyDataset,
    #[error(transparent)]
    Arithmetic(#[from] FixedError),
}

/// Layer sizes only — `[input_dim, hidden…, output_dim]`. The shape is the
/// public, committed part of a model; parameters live in [`WeightsBiases`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelDefinition {
    layer_sizes: Vec<usize>,
}

impl ModelDefinition {
    pub fn new(layer_sizes: Vec<usize>) -> Result<Self, NnError> {
        if layer_sizes.len() < 2 {
            return Err(NnError::TooFewLayers {
                got: layer_sizes.len(),
            });
        }
        if let Some(layer) = layer_sizes.iter().position(|&s| s == 0) {
            return Err(NnError::EmptyLayer { layer });
        }
        Ok(Self { layer_sizes })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    /// Number of layer transitions (weight matrices).
    pub fn transitions(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    /// Total scalar parameter count (weights plus biases) for this shape.
    pub fn param_count(&self) -> usize {
        self.layer_sizes
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    pub fn weight_count(&self) -> usize {
        self.layer_sizes.windows(2).map(|w| w[0] * w[1]).sum()
    }

    pub fn bias_count(&self) -> usize {
        self.layer_sizes.iter().skip(1).sum()
    }
}

/// Weight matrices (fan_out × fan_in, one per transition) and bias vectors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightsBiases<M, const F: u32 = { crate::fixed::DEFAULT_SCALE_BITS }> {
    pub weights: Vec<Vec<Vec<FixedPoint<M, F>>>>,
    pub biases: Vec<Vec<FixedPoint<M, F>>>,
}

impl<M: Mantissa, const F: u32> WeightsBiases<M, F> {
    /// Builds parameters from raw mantissas, flattened per transition in
    /// neuron-major order (each neuron's fan_in weights contiguous).
    pub fn from_mantissas(
        model: &ModelDefinition,
        weight_mantissas: &[M],
        bias_mantissas: &[M],
    ) -> Result<Self, NnError> {
        let expected_w: usize = model.layer_sizes().windows(2).map(|w| w[0] * w[1]).sum();
        let expected_b: usize = model.layer_sizes()[1..].iter().sum();
        if weight_mantissas.len() != expected_w {
            return Err(NnError::ShapeMismatch {
                what: "weights",
                expected: expected_w,
                got: weight_mantissas.len(),
            });
        }
        if bias_mantissas.len() != expected_b {
            return Err(NnError::ShapeMismatch {
                what: "biases",
                expected: expected_b,
                got: bias_mantissas.len(),
            });
        }
        let mut weights = Vec::with_capacity(model.transitions());
        let mut biases = Vec::with_capacity(model.transitions());
        let mut wi = 0;
        let mut bi = 0;
        for t in 0..model.transitions() {
            let fan_in = model.layer_sizes()[t];
            let fan_out = model.layer_sizes()[t + 1];
            let mut matrix = Vec::with_capacity(fan_out);
            for _ in 0..fan_out {
                let row = weight_mantissas[wi..wi + fan_in]
                    .iter()
                    .cloned()
                    .map(FixedPoint::from_mantissa)
                    .collect();
                wi += fan_in;
                matrix.push(row);
            }
            weights.push(matrix);
            let bias_row = bias_mantissas[bi..bi + fan_out]
                .iter()
                .cloned()
                .map(FixedPoint::from_mantissa)
                .collect();
            bi += fan_out;
            biases.push(bias_row);
        }
        Ok(Self { weights, biases })
    }

    /// Checks that the nested shapes match the model exactly.
    pub fn validate(&self, model: &ModelDefinition) -> Result<(), NnError> {
        if self.weights.len() != model.transitions() {
            return Err(NnError::ShapeMismatch {
                what: "weight transitions",
                expected: model.transitions(),
                got: self.weights.len(),
            });
        }
        if self.biases.len() != model.transitions() {
            return Err(NnError::ShapeMismatch {
                what: "bias transitions",
                expected: model.transitions(),
                got: self.biases.len(),
            });
        }
        for t in 0..model.transitions() {
            let fan_in = model.layer_sizes()[t];
            let fan_out = model.layer_sizes()[t + 1];
            if self.weights[t].len() != fan_out {
                return Err(NnError::ShapeMismatch {
                    what: "weight rows",
                    expected: fan_out,
                    got: self.weights[t].len(),
                });
            }
            for row in &self.weights[t] {
                if row.len() != fan_in {
                    return Err(NnError::ShapeMismatch {
                        what: "weight columns",
                        expected: fan_in,
                        got: row.len(),
                    });
                }
            }
            if self.biases[t].len() != fan_out {
                return Err(NnError::ShapeMismatch {
                    what: "bias entries",
                    expected: fan_out,
                    got: self.biases[t].len(),
                });
            }
        }
        Ok(())
    }

    /// Largest absolute weight value, for error-bound computations.
    pub fn max_abs_weight(&self) -> f64 {
        self.weights
            .iter()
            .flatten()
            .flatten()
            .map(|w| w.to_f64().abs())
            .fold(0.0, f64::max)
    }
}

/// One competition entry: shape, parameters, and payout routing.
#[derive(Debug, Clone)]
pub struct Submission<M, const F: u32 = { crate::fixed::DEFAULT_SCALE_BITS }> {
    pub id: u64,
    pub model: ModelDefinition,
    pub params: WeightsBiases<M, F>,
    pub payment_address: Address,
    pub submitter: Address,
    pub submitted_at: u64,
}

/// Fixed-point operations performed, for compute-gas accounting:
/// one unit per multiply and one per add.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpCount {
    pub muls: u64,
    pub adds: u64,
}

impl OpCount {
    pub fn total(&self) -> u64 {
        self.muls + self.adds
    }
}

/// Dense feed-forward pass. Hidden transitions apply ReLU; the final
/// transition emits raw scores.
pub fn forward_pass<M: Mantissa, const F: u32>(
    model: &ModelDefinition,
    params: &WeightsBiases<M, F>,
    input: &[FixedPoint<M, F>],
) -> Result<Vec<FixedPoint<M, F>>, NnError> {
    forward_pass_counted(model, params, input).map(|(scores, _)| scores)
}

/// Forward pass that also tallies fixed-point operations.
pub fn forward_pass_counted<M: Mantissa, const F: u32>(
    model: &ModelDefinition,
    params: &WeightsBiases<M, F>,
    input: &[FixedPoint<M, F>],
) -> Result<(Vec<FixedPoint<M, F>>, OpCount), NnError> {
    params.validate(model)?;
    if input.len() != model.input_dim() {
        return Err(NnError::BadInputLength {
            expected: model.input_dim(),
            got: input.len(),
        });
    }
    let mut ops = OpCount::default();
    let mut activations: Vec<FixedPoint<M, F>> = input.to_vec();
    let last = model.transitions() - 1;
    for t in 0..model.transitions() {
        let fan_out = model.layer_sizes()[t + 1];
        let mut next = Vec::with_capacity(fan_out);
        for j in 0..fan_out {
            let mut acc = params.biases[t][j].clone();
            for (i, x) in activations.iter().enumerate() {
                let product = params.weights[t][j][i].checked_mul(x)?;
                acc = acc.checked_add(&product)?;
                ops.muls += 1;
                ops.adds += 1;
            }
            if t < last {
                acc = acc.relu();
            }
            next.push(acc);
        }
        activations = next;
    }
    Ok((activations, ops))
}

/// Argmax over the output scores; ties break to the lowest index.
pub fn predict<M: Mantissa, const F: u32>(
    model: &ModelDefinition,
    params: &WeightsBiases<M, F>,
    input: &[FixedPoint<M, F>],
) -> Result<usize, NnError> {
    let scores = forward_pass(model, params, input)?;
    Ok(argmax(&scores))
}

pub(crate) fn argmax<M: Mantissa, const F: u32>(scores: &[FixedPoint<M, F>]) -> usize {
    let mut best = 0;
    for (i, score) in scores.iter().enumerate().skip(1) {
        if score > &scores[best] {
            best = i;
        }
    }
    best
}

/// Result of scoring one model over a dataset.
#[derive(Debug, Clone)]
pub struct Evaluation<M, const F: u32 = { crate::fixed::DEFAULT_SCALE_BITS }> {
    pub score: FixedPoint<M, F>,
    pub correct: usize,
    pub total: usize,
    pub ops: OpCount,
}

/// Fraction of points whose predicted label equals the stored label, as a
/// fixed-point value in [0, 1] (integer division, truncating).
pub fn accuracy<M: Mantissa, const F: u32>(
    model: &ModelDefinition,
    params: &WeightsBiases<M, F>,
    dataset: &[DataPoint],
) -> Result<FixedPoint<M, F>, NnError> {
    accuracy_counted(model, params, dataset).map(|e| e.score)
}

/// Accuracy plus the per-run operation tally used for compute gas.
pub fn accuracy_counted<M: Mantissa, const F: u32>(
    model: &ModelDefinition,
    params: &WeightsBiases<M, F>,
    dataset: &[DataPoint],
) -> Result<Evaluation<M, F>, NnError> {
    if dataset.is_empty() {
        return Err(NnError::EmptyDataset);
    }
    let mut ops = OpCount::default();
    let mut correct = 0usize;
    for point in dataset {
        let input: Vec<FixedPoint<M, F>> = point
            .inputs
            .iter()
            .map(|&v| FixedPoint::from_int(v))
            .collect::<Result<_, _>>()?;
        let (scores, point_ops) = forward_pass_counted(model, params, &input)?;
        ops.muls += point_ops.muls;
        ops.adds += point_ops.adds;
        if argmax(&scores) as i64 == point.label {
            correct += 1;
        }
    }
    let score = FixedPoint::ratio(correct as i64, dataset.len() as i64)?;
    Ok(Evaluation {
        score,
        correct,
        total: dataset.len(),
        ops,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    type Fp = FixedPoint<i128>;
    const ONE: i128 = 1 << 20;

    fn fp(mantissa: i128) -> Fp {
        Fp::from_mantissa(mantissa)
    }

    fn zeros(model: &ModelDefinition) -> WeightsBiases<i128> {
        let w: usize = model.layer_sizes().windows(2).map(|w| w[0] * w[1]).sum();
        let b: usize = model.layer_sizes()[1..].iter().sum();
        WeightsBiases::from_mantissas(model, &vec![0i128; w], &vec![0i128; b]).unwrap()
    }

    #[test]
    fn model_shape_validation() {
        assert!(ModelDefinition::new(vec![2, 4, 2]).is_ok());
        assert_eq!(
            ModelDefinition::new(vec![2]),
            Err(NnError::TooFewLayers { got: 1 })
        );
        assert_eq!(
            ModelDefinition::new(vec![2, 0, 2]),
            Err(NnError::EmptyLayer { layer: 1 })
        );
    }

    #[test]
    fn all_zero_network_outputs_zero() {
        let model = ModelDefinition::new(vec![3, 4, 2]).unwrap();
        let params = zeros(&model);
        let input = vec![Fp::from_int(5).unwrap(), Fp::from_int(-7).unwrap(), Fp::one()];
        let out = forward_pass(&model, &params, &input).unwrap();
        assert_eq!(out, vec![Fp::zero(), Fp::zero()]);
    }

    #[test]
    fn identity_network_passes_nonnegative_input_through() {
        let model = ModelDefinition::new(vec![3, 3]).unwrap();
        let mut w = vec![0i128; 9];
        for i in 0..3 {
            w[i * 3 + i] = ONE;
        }
        let params = WeightsBiases::from_mantissas(&model, &w, &[0, 0, 0]).unwrap();
        let input = vec![fp(ONE / 2), Fp::from_int(2).unwrap(), Fp::zero()];
        let out = forward_pass(&model, &params, &input).unwrap();
        assert_eq!(out, input);
    }

    #[test]
    fn op_count_matches_shape() {
        let model = ModelDefinition::new(vec![2, 4, 2]).unwrap();
        let params = zeros(&model);
        let input = vec![Fp::one(), Fp::one()];
        let (_, ops) = forward_pass_counted(&model, &params, &input).unwrap();
        // transitions: 2*4 + 4*2 = 16 multiplies, one add per multiply.
        assert_eq!(ops.muls, 16);
        assert_eq!(ops.adds, 16);
        assert_eq!(ops.total(), 32);
    }

    #[test]
    fn predict_argmax_and_ties() {
        let model = ModelDefinition::new(vec![1, 2]).unwrap();
        // scores = [b0, b1]; weights zero.
        let params = WeightsBiases::from_mantissas(&model, &[0, 0], &[0, 5 * ONE]).unwrap();
        assert_eq!(predict(&model, &params, &[Fp::zero()]).unwrap(), 1);
        let tied = WeightsBiases::from_mantissas(&model, &[0, 0], &[ONE, ONE]).unwrap();
        assert_eq!(predict(&model, &tied, &[Fp::zero()]).unwrap(), 0);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let model = ModelDefinition::new(vec![2, 2]).unwrap();
        let other = ModelDefinition::new(vec![2, 3]).unwrap();
        let params = zeros(&other);
        let input = vec![Fp::zero(), Fp::zero()];
        assert!(matches!(
            forward_pass(&model, &params, &input),
            Err(NnError::ShapeMismatch { .. })
        ));
        let ok = zeros(&model);
        assert!(matches!(
            forward_pass(&model, &ok, &[Fp::zero()]),
            Err(NnError::BadInputLength { .. })
        ));
    }

    #[test]
    fn accuracy_on_all_zero_labels() {
        // The all-zero network scores zero everywhere; argmax ties to index 0,
        // so a dataset labeled all-0 scores exactly 1.0.
        let model = ModelDefinition::new(vec![2, 2]).unwrap();
        let params = zeros(&model);
        let dataset: Vec<DataPoint> = (0..6)
            .map(|i| DataPoint {
                inputs: vec![i, -i],
                label: 0,
            })
            .collect();
        let eval = accuracy_counted(&model, &params, &dataset).unwrap();
        assert_eq!(eval.score, Fp::one());
        assert_eq!(eval.correct, 6);
    }

    #[test]
    fn accuracy_three_of_five() {
        // Score = +x for class 1: predicts 1 iff x > 0.
        let model = ModelDefinition::new(vec![1, 2]).unwrap();
        let params: WeightsBiases<i128> =
            WeightsBiases::from_mantissas(&model, &[-ONE, ONE], &[0, 0]).unwrap();
        let dataset = vec![
            DataPoint { inputs: vec![1], label: 1 },
            DataPoint { inputs: vec![2], label: 1 },
            DataPoint { inputs: vec![-1], label: 0 },
            DataPoint { inputs: vec![3], label: 0 },  // miss
            DataPoint { inputs: vec![-2], label: 1 }, // miss
        ];
        let eval = accuracy_counted(&model, &params, &dataset).unwrap();
        assert_eq!(eval.correct, 3);
        assert_eq!(*eval.score.mantissa(), 3 * ONE / 5);
    }

    #[test]
    fn empty_dataset_is_an_error() {
        let model = ModelDefinition::new(vec![1, 2]).unwrap();
        let params = zeros(&model);
        assert_eq!(
            accuracy(&model, &params, &[]),
            Err(NnError::EmptyDataset)
        );
    }

    /// Double-precision mirror of the forward pass, used as the reference
    /// oracle for fidelity tests. All inputs are dyadic rationals well within
    /// f64's exact range, so this reference is exact real arithmetic.
    fn forward_f64(model: &ModelDefinition, params: &WeightsBiases<i128>, input: &[f64]) -> Vec<f64> {
        let mut acts: Vec<f64> = input.to_vec();
        let last = model.transitions() - 1;
        for t in 0..model.transitions() {
            let mut next = Vec::new();
            for j in 0..model.layer_sizes()[t + 1] {
                let mut acc = params.biases[t][j].to_f64();
                for (i, x) in acts.iter().enumerate() {
                    acc += params.weights[t][j][i].to_f64() * x;
                }
                if t < last {
                    acc = acc.max(0.0);
                }
                next.push(acc);
            }
            acts = next;
        }
        acts
    }

    #[test]
    fn forward_pass_tracks_f64_oracle_within_depth_bound() {
        let model = ModelDefinition::new(vec![2, 16, 2]).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(2024);
        for _ in 0..1000 {
            let wn: usize = model.layer_sizes().windows(2).map(|w| w[0] * w[1]).sum();
            let bn: usize = model.layer_sizes()[1..].iter().sum();
            let w: Vec<i128> = (0..wn).map(|_| rng.gen_range(-ONE..=ONE)).collect();
            let b: Vec<i128> = (0..bn).map(|_| rng.gen_range(-ONE..=ONE)).collect();
            let params = WeightsBiases::from_mantissas(&model, &w, &b).unwrap();
            let input_m: Vec<i128> = (0..2).map(|_| rng.gen_range(-4 * ONE..=4 * ONE)).collect();
            let input: Vec<Fp> = input_m.iter().map(|&m| fp(m)).collect();
            let input_f: Vec<f64> = input.iter().map(|x| x.to_f64()).collect();

            let got = forward_pass(&model, &params, &input).unwrap();
            let want = forward_f64(&model, &params, &input_f);

            let max_fan_in = 16.0;
            let bound =
                model.transitions() as f64 * max_fan_in * params.max_abs_weight() / (1u64 << 20) as f64;
            for (g, w) in got.iter().zip(&want) {
                assert!(
                    (g.to_f64() - w).abs() <= bound,
                    "error {} exceeds bound {bound}",
                    (g.to_f64() - w).abs()
                );
            }
        }
    }

    proptest! {
        // Prediction agrees with the oracle whenever the oracle's top-two
        // margin clears the fixed-point error bound.
        #[test]
        fn predict_matches_oracle_outside_margin(seed in any::<u64>()) {
            let model = ModelDefinition::new(vec![3, 8, 3]).unwrap();
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let wn: usize = model.layer_sizes().windows(2).map(|w| w[0] * w[1]).sum();
            let bn: usize = model.layer_sizes()[1..].iter().sum();
            let w: Vec<i128> = (0..wn).map(|_| rng.gen_range(-ONE..=ONE)).collect();
            let b: Vec<i128> = (0..bn).map(|_| rng.gen_range(-ONE..=ONE)).collect();
            let params = WeightsBiases::from_mantissas(&model, &w, &b).unwrap();
            let input: Vec<Fp> = (0..3).map(|_| fp(rng.gen_range(-2 * ONE..=2 * ONE))).collect();
            let input_f: Vec<f64> = input.iter().map(|x| x.to_f64()).collect();

            let scores = forward_f64(&model, &params, &input_f);
            let mut sorted = scores.clone();
            sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let margin = sorted[0] - sorted[1];
            let bound = model.transitions() as f64 * 8.0 * params.max_abs_weight() / (1u64 << 20) as f64;

            if margin > 2.0 * bound {
                let oracle_label = scores
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .unwrap()
                    .0;
                prop_assert_eq!(predict(&model, &params, &input).unwrap(), oracle_label);
            }
        }
    }
}
