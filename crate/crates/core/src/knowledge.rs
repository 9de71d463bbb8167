//! The LLM knowledge prior: per-label feature weights, inter-class
//! confusability, and budget multipliers, parsed from raw model output and
//! normalized into hard ranges.
//!
//! Validation is stricter than the prompt: weights are clamped to `[-2, 2]`,
//! confusability to `[0, 1.5]`, multipliers to `[0.8, 1.3]`. The prompt asks
//! for narrower ranges (`[-1.5, 1.5]` and `[0, 1.2]`); values that pass the
//! clamp but exceed the prompt range are surfaced as warnings rather than
//! errors. The fixture responses bundled with the crate are served when the
//! pipeline runs offline.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::datastore::Activity;
use crate::featurizer::SemanticFeatureSpec;

/// Hard acceptance range for label-feature weights.
pub const WEIGHT_CLAMP: (f64, f64) = (-2.0, 2.0);
/// Hard acceptance range for confusability values.
pub const CONFUSABILITY_CLAMP: (f64, f64) = (0.0, 1.5);
/// Hard acceptance range for budget multipliers.
pub const MULTIPLIER_CLAMP: (f64, f64) = (0.8, 1.3);
/// Ranges the generation prompt asks for; exceeding them only warns.
pub const WEIGHT_PROMPT_RANGE: (f64, f64) = (-1.5, 1.5);
pub const CONFUSABILITY_PROMPT_RANGE: (f64, f64) = (0.0, 1.2);

#[derive(Debug, Error)]
pub enum KnowledgeError {
    #[error("schema error: {0}")]
    Schema(String),
    #[error("validation error: {0}")]
    Validation(String),
}

/// Validated LLM knowledge object.
///
/// All six labels are present as keys after validation; missing entries are
/// coerced to their defaults (empty weight map, empty confusability row,
/// multiplier 1.0). Confusability is stored asymmetrically as given: the
/// outer key is the true label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgePrior {
    pub label_feature_weights: BTreeMap<Activity, BTreeMap<String, f64>>,
    pub confusability: BTreeMap<Activity, BTreeMap<Activity, f64>>,
    pub label_budget_multiplier: BTreeMap<Activity, f64>,
}

impl KnowledgePrior {
    /// Weight of `feature` for `label`; absent entries are 0.
    pub fn weight(&self, label: Activity, feature: &str) -> f64 {
        self.label_feature_weights
            .get(&label)
            .and_then(|m| m.get(feature))
            .copied()
            .unwrap_or(0.0)
    }

    /// Confusability of `a` being mistaken for `b`; absent pairs are 0.
    pub fn confusability(&self, a: Activity, b: Activity) -> f64 {
        self.confusability.get(&a).and_then(|m| m.get(&b)).copied().unwrap_or(0.0)
    }

    /// Budget multiplier for `label`; absent labels default to 1.0.
    pub fn multiplier(&self, label: Activity) -> f64 {
        self.label_budget_multiplier.get(&label).copied().unwrap_or(1.0)
    }

    /// Materializes the label's weight vector aligned to `feature_columns`.
    /// Features absent from the prior contribute 0.
    pub fn weight_vector(&self, label: Activity, feature_columns: &[String]) -> Vec<f64> {
        feature_columns.iter().map(|c| self.weight(label, c)).collect()
    }

    /// Exemplar budget: `round(base_k * multiplier)` (half away from zero),
    /// floored at 1.
    pub fn budget(&self, label: Activity, base_k: usize) -> usize {
        let raw = (base_k as f64 * self.multiplier(label)).round();
        (raw as usize).max(1)
    }

    /// Per-class budgets using the dynamic/static base counts.
    pub fn budgets(&self, base_dynamic: usize, base_static: usize) -> BTreeMap<Activity, usize> {
        Activity::ALL
            .into_iter()
            .map(|l| {
                let base = if l.is_dynamic() { base_dynamic } else { base_static };
                (l, self.budget(l, base))
            })
            .collect()
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("prior serializes")
    }
}

/// Parses and validates a raw knowledge response.
///
/// Returns the normalized prior plus warnings for values that passed the
/// clamp but exceeded the prompt's requested ranges, and for dropped
/// self-pairs. Unknown labels or features are hard errors naming the
/// offender; non-object input is a schema error.
pub fn parse_and_validate(
    raw_text: &str,
    allowed_labels: &[Activity],
    allowed_features: &[String],
) -> Result<(KnowledgePrior, Vec<String>), KnowledgeError> {
    let value: serde_json::Value = serde_json::from_str(raw_text)
        .map_err(|e| KnowledgeError::Schema(format!("not parseable as JSON: {e}")))?;
    let obj = value
        .as_object()
        .ok_or_else(|| KnowledgeError::Schema("top-level value is not a JSON object".into()))?;

    let mut warnings = Vec::new();
    for key in obj.keys() {
        if !matches!(
            key.as_str(),
            "label_feature_weights" | "confusability" | "label_budget_multiplier"
        ) {
            warnings.push(format!("ignoring unknown top-level key {key:?}"));
        }
    }

    let parse_label = |name: &str| -> Result<Activity, KnowledgeError> {
        let label: Activity = name
            .parse()
            .map_err(|_| KnowledgeError::Validation(format!("unknown label {name:?}")))?;
        if !allowed_labels.contains(&label) {
            return Err(KnowledgeError::Validation(format!("label {name:?} is not allowed")));
        }
        Ok(label)
    };
    let number = |v: &serde_json::Value, path: String| -> Result<f64, KnowledgeError> {
        v.as_f64().ok_or_else(|| KnowledgeError::Schema(format!("{path} is not a number")))
    };

    // Label-feature weights: clamp to the hard range, warn past the prompt range.
    let mut label_feature_weights: BTreeMap<Activity, BTreeMap<String, f64>> =
        allowed_labels.iter().map(|&l| (l, BTreeMap::new())).collect();
    if let Some(v) = obj.get("label_feature_weights") {
        let map = v.as_object().ok_or_else(|| {
            KnowledgeError::Schema("label_feature_weights is not an object".into())
        })?;
        for (label_name, features) in map {
            let label = parse_label(label_name)?;
            let features = features.as_object().ok_or_else(|| {
                KnowledgeError::Schema(format!("label_feature_weights.{label_name} is not an object"))
            })?;
            let entry = label_feature_weights.entry(label).or_default();
            for (feature, weight) in features {
                if !allowed_features.iter().any(|f| f == feature) {
                    return Err(KnowledgeError::Validation(format!(
                        "unknown feature {feature:?} under label {label_name:?}"
                    )));
                }
                let raw = number(weight, format!("weight {label_name}.{feature}"))?;
                let clamped = raw.clamp(WEIGHT_CLAMP.0, WEIGHT_CLAMP.1);
                if raw < WEIGHT_PROMPT_RANGE.0 || raw > WEIGHT_PROMPT_RANGE.1 {
                    warnings.push(format!(
                        "weight {label_name}.{feature}={raw} outside prompt range [-1.5, 1.5]"
                    ));
                }
                entry.insert(feature.clone(), clamped);
            }
        }
    }

    // Confusability: drop self-pairs, clamp the rest.
    let mut confusability: BTreeMap<Activity, BTreeMap<Activity, f64>> =
        allowed_labels.iter().map(|&l| (l, BTreeMap::new())).collect();
    if let Some(v) = obj.get("confusability") {
        let map = v
            .as_object()
            .ok_or_else(|| KnowledgeError::Schema("confusability is not an object".into()))?;
        for (a_name, row) in map {
            let a = parse_label(a_name)?;
            let row = row.as_object().ok_or_else(|| {
                KnowledgeError::Schema(format!("confusability.{a_name} is not an object"))
            })?;
            let entry = confusability.entry(a).or_default();
            for (b_name, value) in row {
                let b = parse_label(b_name)?;
                if a == b {
                    warnings.push(format!("dropping self-pair confusability {a_name:?}"));
                    continue;
                }
                let raw = number(value, format!("confusability {a_name}.{b_name}"))?;
                let clamped = raw.clamp(CONFUSABILITY_CLAMP.0, CONFUSABILITY_CLAMP.1);
                if raw > CONFUSABILITY_PROMPT_RANGE.1 {
                    warnings.push(format!(
                        "confusability {a_name}.{b_name}={raw} outside prompt range [0, 1.2]"
                    ));
                }
                entry.insert(b, clamped);
            }
        }
    }

    // Budget multipliers: missing labels default to 1.0.
    let mut label_budget_multiplier: BTreeMap<Activity, f64> =
        allowed_labels.iter().map(|&l| (l, 1.0)).collect();
    if let Some(v) = obj.get("label_budget_multiplier") {
        let map = v.as_object().ok_or_else(|| {
            KnowledgeError::Schema("label_budget_multiplier is not an object".into())
        })?;
        for (label_name, value) in map {
            let label = parse_label(label_name)?;
            let raw = number(value, format!("multiplier {label_name}"))?;
            label_budget_multiplier
                .insert(label, raw.clamp(MULTIPLIER_CLAMP.0, MULTIPLIER_CLAMP.1));
        }
    }

    Ok((KnowledgePrior { label_feature_weights, confusability, label_budget_multiplier }, warnings))
}

/// Parses the semantic feature spec JSON (`{"features": [{name, weights}]}`).
pub fn parse_semantic_specs(raw_text: &str) -> Result<Vec<SemanticFeatureSpec>, KnowledgeError> {
    #[derive(Deserialize)]
    struct Wrapper {
        features: Vec<SemanticFeatureSpec>,
    }
    let wrapper: Wrapper = serde_json::from_str(raw_text)
        .map_err(|e| KnowledgeError::Schema(format!("semantic spec: {e}")))?;
    let mut specs = wrapper.features;
    if specs.is_empty() {
        return Err(KnowledgeError::Validation("semantic spec has no features".into()));
    }
    for s in &mut specs {
        s.validate().map_err(|e| KnowledgeError::Validation(e.to_string()))?;
    }
    let mut seen = std::collections::BTreeSet::new();
    for s in &specs {
        if !seen.insert(&s.name) {
            return Err(KnowledgeError::Validation(format!(
                "duplicate semantic feature name {:?}",
                s.name
            )));
        }
    }
    Ok(specs)
}

/// Bundled fixture response for the knowledge prompt.
pub fn fixture_knowledge_text() -> &'static str {
    include_str!("../fixtures/knowledge_prior.json")
}

/// Bundled fixture response for the semantic feature prompt.
pub fn fixture_semantic_text() -> &'static str {
    include_str!("../fixtures/semantic_features.json")
}

/// Parses and validates the bundled knowledge fixture.
pub fn fixture_prior() -> Result<KnowledgePrior, KnowledgeError> {
    let features: Vec<String> = base_and_semantic_vocabulary()?;
    let (prior, _) = parse_and_validate(fixture_knowledge_text(), &Activity::ALL, &features)?;
    Ok(prior)
}

/// Parses the bundled semantic feature fixture.
pub fn fixture_semantic_specs() -> Result<Vec<SemanticFeatureSpec>, KnowledgeError> {
    parse_semantic_specs(fixture_semantic_text())
}

/// The feature vocabulary offered to the knowledge prompt: the 12 base
/// statistics plus the fixture's semantic axis names.
pub fn base_and_semantic_vocabulary() -> Result<Vec<String>, KnowledgeError> {
    let mut vocab: Vec<String> =
        crate::featurizer::BASE_STAT_NAMES.iter().map(|s| s.to_string()).collect();
    vocab.extend(fixture_semantic_specs()?.into_iter().map(|s| s.name));
    Ok(vocab)
}
