use crate::data::Sample;
use crate::model::{Dacdr, Network};

use super::trainer::{apply_freeze, train_objective, Supervised, TrainConfig, TrainReport};
use super::TrainingError;

/// Groups updated when adapting to a new target domain; everything else is
/// held fixed.
pub const FINETUNE_GROUPS: [&str; 3] = ["emb.domain", "emb.item_tgt", "attn.*"];

/// Trains only the domain row, the target item table and the attention
/// projections on the new domain's samples. `cfg.freeze_groups` may freeze
/// further groups.
pub fn finetune(
    model: &mut Dacdr,
    samples: &[Sample],
    cfg: &TrainConfig,
) -> Result<TrainReport, TrainingError> {
    cfg.check_mode(model.output_mode())?;
    model
        .params_mut()
        .train_only(&FINETUNE_GROUPS)
        .map_err(|e| TrainingError::Config(e.to_string()))?;
    apply_freeze(model.params_mut(), &cfg.freeze_groups)?;
    train_objective(&mut Supervised(model), samples, cfg)
}
