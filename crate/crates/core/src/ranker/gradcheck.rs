//! Finite-difference verification of the analytic gradients.

use super::features::{MentionInputs, SparseVec};
use super::model::{pair_loss, Label, RankerModel};
use crate::error::Result;

pub const FD_STEP: f64 = 1e-5;
/// Below this magnitude an analytic/numeric pair counts as agreeing on zero.
pub const ZERO_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct GradEntry {
    pub tensor: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

impl GradEntry {
    pub fn relative_error(&self) -> f64 {
        let (a, n) = (self.analytic, self.numeric);
        if a.abs() < ZERO_TOLERANCE && n.abs() < ZERO_TOLERANCE {
            return 0.0;
        }
        (a - n).abs() / a.abs().max(n.abs())
    }
}

fn loss(
    model: &RankerModel<f64>,
    inputs: &MentionInputs,
    description: &SparseVec,
    label: Label,
) -> Result<f64> {
    Ok(pair_loss(&model.logits(inputs, description)?, label))
}

/// Analytic and central-difference gradient of the pair loss for every parameter.
pub fn compare_gradients(
    model: &RankerModel<f64>,
    inputs: &MentionInputs,
    description: &SparseVec,
    label: Label,
) -> Result<Vec<GradEntry>> {
    let (fv, emb) = model.featurize(inputs, description)?;
    let cache = model.forward::<rand::rngs::ThreadRng>(&fv, None)?;
    let analytic = model
        .backward(inputs, description, &emb, &cache, label)
        .dense(model);

    let mut probe = model.clone();
    let mut out = Vec::new();
    for (t, (name, grad)) in analytic.iter().enumerate() {
        for (i, &a) in grad.iter().enumerate() {
            let original = probe.params_mut()[t].1[i];
            probe.params_mut()[t].1[i] = original + FD_STEP;
            let up = loss(&probe, inputs, description, label)?;
            probe.params_mut()[t].1[i] = original - FD_STEP;
            let down = loss(&probe, inputs, description, label)?;
            probe.params_mut()[t].1[i] = original;
            out.push(GradEntry {
                tensor: name.clone(),
                index: i,
                analytic: a,
                numeric: (up - down) / (2.0 * FD_STEP),
            });
        }
    }
    Ok(out)
}

/// Maximum relative error between analytic and numeric gradients. Dropout is never
/// applied here.
pub fn gradient_check(
    model: &RankerModel<f64>,
    inputs: &MentionInputs,
    description: &SparseVec,
    label: Label,
) -> Result<f64> {
    Ok(compare_gradients(model, inputs, description, label)?
        .iter()
        .map(GradEntry::relative_error)
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ranker::config::TrainConfig;
    use crate::ranker::features::MentionInput;
    use crate::ranker::model::tests::{random_model, tiny_dims, tiny_inputs};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn random_tiny_models_pass() {
        for seed in 0..5 {
            let m = random_model(tiny_dims(5, 0), seed);
            let (inputs, desc) = tiny_inputs();
            for label in [Label::Correct, Label::Incorrect] {
                let err = gradient_check(&m, &inputs, &desc, label).unwrap();
                assert!(err < 1e-4, "seed {seed}: {err}");
            }
        }
    }

    #[test]
    fn character_mode_passes() {
        let m = random_model(tiny_dims(5, 4), 8);
        let (mut inputs, desc) = tiny_inputs();
        inputs.surface = MentionInput::Chars {
            low: vec![(0, 0.5), (3, 1.0)],
            high: vec![(0, 0.9), (3, 1.0)],
        };
        assert!(gradient_check(&m, &inputs, &desc, Label::Correct).unwrap() < 1e-4);
    }

    #[test]
    fn dead_relu_path_has_zero_gradient_both_ways() {
        let mut m = RankerModel::<f64>::init(
            tiny_dims(5, 0),
            &TrainConfig::default(),
            &mut ChaCha8Rng::seed_from_u64(6),
        );
        // unit 0 of the first hidden layer never activates
        for c in 0..m.hidden[0].in_dim() {
            m.hidden[0].weight.set(0, c, 0.0);
        }
        m.hidden[0].bias[0] = -1.0;
        let (inputs, desc) = tiny_inputs();
        let entries = compare_gradients(&m, &inputs, &desc, Label::Correct).unwrap();
        let cols = m.hidden[0].in_dim();
        let dead: Vec<&GradEntry> = entries
            .iter()
            .filter(|e| {
                (e.tensor == "hidden.0.weight" && e.index < cols)
                    || (e.tensor == "hidden.0.bias" && e.index == 0)
                    || (e.tensor == "hidden.1.weight" && e.index % m.dims.hidden == 0)
            })
            .collect();
        assert!(dead.len() > cols);
        for e in dead.iter().filter(|e| e.tensor != "hidden.1.weight") {
            assert!(
                e.analytic.abs() < ZERO_TOLERANCE && e.numeric.abs() < ZERO_TOLERANCE,
                "{e:?}"
            );
        }
        // the dead unit's outgoing weights see a zero input
        for e in dead.iter().filter(|e| e.tensor == "hidden.1.weight") {
            assert!(
                e.analytic.abs() < ZERO_TOLERANCE && e.numeric.abs() < ZERO_TOLERANCE,
                "{e:?}"
            );
        }
    }

    #[test]
    fn all_active_model_is_nearly_exact() {
        let mut m = RankerModel::<f64>::init(
            tiny_dims(5, 0),
            &TrainConfig::default(),
            &mut ChaCha8Rng::seed_from_u64(7),
        );
        // positive weights and biases keep every unit in the linear region
        for layer in &mut m.hidden {
            layer
                .weight
                .as_mut_slice()
                .iter_mut()
                .for_each(|w| *w = w.abs());
            layer.bias.iter_mut().for_each(|b| *b = 1.0);
        }
        for p in [
            &mut m.mention_proj,
            &mut m.context_proj,
            &mut m.description_proj,
        ] {
            p.weight
                .as_mut_slice()
                .iter_mut()
                .for_each(|w| *w = w.abs());
        }
        m.word_embedding
            .as_mut_slice()
            .iter_mut()
            .for_each(|w| *w = w.abs());
        let (inputs, desc) = tiny_inputs();
        let (fv, _) = m.featurize(&inputs, &desc).unwrap();
        let cache = m.forward::<ChaCha8Rng>(&fv, None).unwrap();
        assert!(cache.logits.iter().all(|l| l.is_finite()));
        let err = gradient_check(&m, &inputs, &desc, Label::Incorrect).unwrap();
        assert!(err < 1e-6, "{err}");
    }
}
