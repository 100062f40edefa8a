use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::optim::DEFAULT_LR;

pub const DEFAULT_BATCH_SIZE: usize = 16;
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum StageName {
    #[serde(rename = "MLM_domain")]
    MlmDomain,
    #[serde(rename = "MLM_tgt")]
    MlmTgt,
    #[serde(rename = "STS_src")]
    StsSrc,
    #[serde(rename = "STS_tgt")]
    StsTgt,
    #[serde(rename = "NLI_src")]
    NliSrc,
    #[serde(rename = "MLM_src")]
    MlmSrc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObjectiveKind {
    Mlm,
    Sts,
    Nli,
}

impl StageName {
    pub const ALL: [StageName; 6] = [
        StageName::MlmDomain,
        StageName::MlmTgt,
        StageName::StsSrc,
        StageName::StsTgt,
        StageName::NliSrc,
        StageName::MlmSrc,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StageName::MlmDomain => "MLM_domain",
            StageName::MlmTgt => "MLM_tgt",
            StageName::StsSrc => "STS_src",
            StageName::StsTgt => "STS_tgt",
            StageName::NliSrc => "NLI_src",
            StageName::MlmSrc => "MLM_src",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|n| n.as_str() == s.trim())
    }

    pub fn kind(self) -> ObjectiveKind {
        match self {
            StageName::MlmDomain | StageName::MlmTgt | StageName::MlmSrc => ObjectiveKind::Mlm,
            StageName::StsSrc | StageName::StsTgt => ObjectiveKind::Sts,
            StageName::NliSrc => ObjectiveKind::Nli,
        }
    }

    pub fn default_epochs(self) -> usize {
        match self {
            StageName::MlmTgt => 10,
            StageName::MlmDomain | StageName::MlmSrc => 5,
            StageName::StsSrc | StageName::StsTgt => 5,
            StageName::NliSrc => 3,
        }
    }
}

impl fmt::Display for StageName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "StageRecord")]
pub struct Stage {
    pub name: StageName,
    /// Overrides the dataset the runner would otherwise use for this stage.
    pub dataset: Option<PathBuf>,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
}

/// Plan-file form of a stage: a bare name, or an object where everything
/// but the name is optional.
#[derive(Deserialize)]
#[serde(untagged)]
enum StageRecord {
    Name(StageName),
    Full(StageFields),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StageFields {
    name: StageName,
    #[serde(default)]
    dataset: Option<PathBuf>,
    epochs: Option<usize>,
    batch_size: Option<usize>,
    lr: Option<f64>,
}

impl From<StageRecord> for Stage {
    fn from(r: StageRecord) -> Self {
        let r = match r {
            StageRecord::Name(name) => return Stage::new(name),
            StageRecord::Full(f) => f,
        };
        let d = Stage::new(r.name);
        Stage {
            name: r.name,
            dataset: r.dataset,
            epochs: r.epochs.unwrap_or(d.epochs),
            batch_size: r.batch_size.unwrap_or(d.batch_size),
            lr: r.lr.unwrap_or(d.lr),
        }
    }
}

impl Stage {
    pub fn new(name: StageName) -> Self {
        Stage {
            name,
            dataset: None,
            epochs: name.default_epochs(),
            batch_size: DEFAULT_BATCH_SIZE,
            lr: DEFAULT_LR,
        }
    }

    pub fn kind(&self) -> ObjectiveKind {
        self.name.kind()
    }

    pub fn with_epochs(mut self, epochs: usize) -> Self {
        self.epochs = epochs;
        self
    }

    pub fn with_lr(mut self, lr: f64) -> Self {
        self.lr = lr;
        self
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumPlan {
    pub stages: Vec<Stage>,
    pub seed: u64,
}

impl Default for CurriculumPlan {
    fn default() -> Self {
        CurriculumPlan {
            stages: Vec::new(),
            seed: DEFAULT_SEED,
        }
    }
}

impl CurriculumPlan {
    pub fn new(stages: Vec<Stage>) -> Self {
        CurriculumPlan {
            stages,
            seed: DEFAULT_SEED,
        }
    }

    /// A plan of default-configured stages.
    pub fn from_names(names: &[StageName]) -> Self {
        Self::new(names.iter().map(|&n| Stage::new(n)).collect())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn names(&self) -> Vec<StageName> {
        self.stages.iter().map(|s| s.name).collect()
    }

    pub fn len(&self) -> usize {
        self.stages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stages.is_empty()
    }

    /// Stage names joined by arrows, or `identity` for the empty plan.
    pub fn id(&self) -> String {
        if self.stages.is_empty() {
            return "identity".into();
        }
        self.stages.iter().map(|s| s.name.as_str()).collect::<Vec<_>>().join("→")
    }

    pub fn ends_with(&self, name: StageName) -> bool {
        self.stages.last().is_some_and(|s| s.name == name)
    }

    /// Splits off a trailing `STS_tgt` stage.
    pub fn split_target(&self) -> (CurriculumPlan, Option<Stage>) {
        let mut prefix = self.clone();
        let last = if self.ends_with(StageName::StsTgt) {
            prefix.stages.pop()
        } else {
            None
        };
        (prefix, last)
    }

    /// Parses a plan file: a JSON list of stage records.
    pub fn from_json(text: &str, seed: u64) -> Result<Self> {
        let stages: Vec<Stage> = serde_json::from_str(text)?;
        Ok(CurriculumPlan { stages, seed })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.stages).expect("stages serialize")
    }

    /// [`validate_plan`] as an error.
    pub fn check(&self) -> Result<()> {
        validate_plan(self).map_err(|v| Error::Config(format!("plan {}: {v}", self.id())))
    }
}

/// A rule a plan breaks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation(pub String);

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub fn validate_plan(plan: &CurriculumPlan) -> Result<(), Violation> {
    let n = plan.stages.len();
    for (i, s) in plan.stages.iter().enumerate() {
        if s.name == StageName::MlmDomain && i != 0 {
            return Err(Violation("MLM_domain must be first".into()));
        }
        if s.name == StageName::StsTgt && i + 1 != n {
            return Err(Violation("STS_tgt must be last".into()));
        }
        if s.epochs == 0 {
            return Err(Violation(format!("stage {i} ({}) needs at least one epoch", s.name)));
        }
        if s.batch_size == 0 {
            return Err(Violation(format!("stage {i} ({}) needs a positive batch size", s.name)));
        }
        if !(s.lr.is_finite() && s.lr > 0.0) {
            return Err(Violation(format!("stage {i} ({}) has learning rate {}", s.name, s.lr)));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    Unsupervised,
    Supervised,
}

/// The stage combinations evaluated in the unsupervised setting.
const UNSUPERVISED: [&[StageName]; 9] = {
    use StageName::*;
    [
        &[MlmTgt],
        &[StsSrc],
        &[StsSrc, MlmTgt],
        &[MlmDomain],
        &[MlmTgt, StsSrc],
        &[MlmDomain, MlmTgt],
        &[MlmDomain, StsSrc],
        &[MlmDomain, StsSrc, MlmTgt],
        &[MlmDomain, MlmTgt, StsSrc],
    ]
};

/// The supervised rows, each followed by `STS_tgt`. The empty prefix is
/// plain fine-tuning.
const SUPERVISED: [&[StageName]; 8] = {
    use StageName::*;
    [
        &[],
        &[MlmTgt],
        &[StsSrc],
        &[MlmTgt, StsSrc],
        &[MlmDomain, StsSrc],
        &[MlmDomain],
        &[MlmDomain, StsSrc, MlmTgt],
        &[MlmDomain, MlmTgt],
    ]
};

pub fn enumerate_paper_plans(setting: Setting) -> Vec<CurriculumPlan> {
    match setting {
        Setting::Unsupervised => UNSUPERVISED.iter().map(|n| CurriculumPlan::from_names(n)).collect(),
        Setting::Supervised => SUPERVISED
            .iter()
            .map(|n| {
                let mut names = n.to_vec();
                names.push(StageName::StsTgt);
                CurriculumPlan::from_names(&names)
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use StageName::*;

    #[test]
    fn ordering_rules() {
        assert!(validate_plan(&CurriculumPlan::from_names(&[MlmDomain, MlmTgt, StsSrc])).is_ok());
        assert_eq!(
            validate_plan(&CurriculumPlan::from_names(&[StsSrc, MlmDomain])),
            Err(Violation("MLM_domain must be first".into()))
        );
        assert!(validate_plan(&CurriculumPlan::default()).is_ok());
        assert!(validate_plan(&CurriculumPlan::from_names(&[StsTgt, MlmTgt])).is_err());
        assert!(validate_plan(&CurriculumPlan::from_names(&[MlmDomain, MlmDomain])).is_err());
    }

    #[test]
    fn hyperparameters_are_checked() {
        let bad = [
            Stage::new(MlmTgt).with_epochs(0),
            Stage::new(MlmTgt).with_batch_size(0),
            Stage::new(MlmTgt).with_lr(0.0),
            Stage::new(MlmTgt).with_lr(f64::NAN),
        ];
        for s in bad {
            assert!(validate_plan(&CurriculumPlan::new(vec![s])).is_err());
        }
    }

    #[test]
    fn defaults_follow_the_stage() {
        assert_eq!(Stage::new(MlmTgt).epochs, 10);
        assert_eq!(Stage::new(MlmDomain).epochs, 5);
        assert_eq!(Stage::new(StsSrc).epochs, 5);
        assert_eq!(Stage::new(NliSrc).epochs, 3);
        assert_eq!(Stage::new(MlmSrc).epochs, 5);
        assert_eq!(Stage::new(StsTgt).batch_size, 16);
        assert_eq!(Stage::new(StsTgt).lr, 2e-5);
        assert_eq!(NliSrc.kind(), ObjectiveKind::Nli);
        assert_eq!(MlmSrc.kind(), ObjectiveKind::Mlm);
    }

    #[test]
    fn plan_file_round_trip() {
        let text = r#"[{"name": "MLM_domain", "dataset": "reddit.txt"}, {"name": "STS_tgt", "epochs": 2, "lr": 0.001}]"#;
        let plan = CurriculumPlan::from_json(text, 42).unwrap();
        assert_eq!(plan.stages[0].epochs, 5);
        assert_eq!(plan.stages[0].dataset.as_deref(), Some(std::path::Path::new("reddit.txt")));
        assert_eq!(plan.stages[1].epochs, 2);
        assert_eq!(plan.stages[1].batch_size, 16);
        assert_eq!(CurriculumPlan::from_json(&plan.to_json(), 42).unwrap(), plan);
        assert!(CurriculumPlan::from_json(r#"[{"name": "MLM_web"}]"#, 42).is_err());
    }

    #[test]
    fn ids_and_split() {
        let plan = CurriculumPlan::from_names(&[MlmTgt, StsTgt]);
        assert_eq!(plan.id(), "MLM_tgt→STS_tgt");
        let (prefix, last) = plan.split_target();
        assert_eq!(prefix.names(), [MlmTgt]);
        assert_eq!(last.unwrap().name, StsTgt);
        assert_eq!(CurriculumPlan::default().id(), "identity");
    }
}
