use crate::data::{build_vocabulary, tokenize, transport_toy, TermId};
use crate::eval::{bleu, meteor_em, rouge_l};
use crate::model::{DecoderKind, ExampleBuilder, GenerationModel, ModelConfig, Setting};
use crate::tensor::{grad_check, DropoutMode, GradCheckConfig};

use super::ExperimentError;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Small model used for gradient checks.
pub fn gradient_check_config(kind: DecoderKind, setting: Setting) -> ModelConfig {
    ModelConfig {
        d: 8,
        heads: 2,
        decoder_layers: 1,
        decoder_kind: kind,
        dropout: 0.1,
        max_decode_len: 12,
        ..ModelConfig::default()
    }
    .with_setting(setting)
}

/// Central-difference check of the full training loss for both decoders
/// under every ablation setting, on the toy transport term `GO:2`.
pub fn gradient_suite(cfg: GradCheckConfig) -> Result<Vec<CheckOutcome>, ExperimentError> {
    let o = transport_toy();
    let vocab = build_vocabulary(&o.vocabulary_corpus(None), 1)?;
    let term = TermId::from("GO:2");
    let mut out = Vec::new();
    for kind in [DecoderKind::Transformer, DecoderKind::Lstm] {
        for setting in Setting::ALL {
            let mc = gradient_check_config(kind, setting);
            let model = GenerationModel::new(mc.clone(), vocab.len(), 5)?;
            let ex = ExampleBuilder::new(&o, &vocab, &mc).prepare(&term)?;
            let mut store = model.params().clone();
            let report = grad_check(&mut store, None, cfg, |tape, s| model.loss_with(s, tape, &ex, DropoutMode::Eval))?;
            out.push(CheckOutcome {
                name: format!("gradient {kind:?}/{}", setting.label()),
                passed: report.passed(),
                detail: format!(
                    "max relative error {:.2e} over {} parameters{}",
                    report.max_rel_error(),
                    report.params.len(),
                    if report.passed() { String::new() } else { format!(", failing {:?}", report.failures()) }
                ),
            });
        }
    }
    Ok(out)
}

/// Identity and disjointness checks of the three metrics.
pub fn metric_suite() -> Result<Vec<CheckOutcome>, ExperimentError> {
    let same = vec![tokenize("enables the transfer of sodium ions across a membrane")];
    let other = vec![tokenize("catalysis of calcium ion transfer")];
    let disjoint = vec![tokenize("glucose uptake by cells")];
    let mut out = Vec::new();
    for (name, f) in [
        ("bleu", bleu as fn(&[Vec<String>], &[Vec<String>]) -> Result<f64, crate::eval::EvalError>),
        ("rouge-l", rouge_l),
        ("meteor", meteor_em),
    ] {
        let s = f(&same, &same)?;
        let z = f(&same, &disjoint)?;
        let mid = f(&other, &same)?;
        out.push(CheckOutcome {
            name: format!("metric {name}"),
            passed: (s - 100.0).abs() < 1e-9 && z == 0.0 && (0.0..100.0).contains(&mid),
            detail: format!("identical {s:.4}, disjoint {z:.4}, partial {mid:.4}"),
        });
    }
    Ok(out)
}
