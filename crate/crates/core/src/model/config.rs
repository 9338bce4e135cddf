use super::ModelError;

named_enum!(
    /// Whether the head emits a click logit (BCE) or a raw rating (MSE).
    OutputMode { Logit => "logit", Rating => "rating" }
);

named_enum!(
    /// `Gated` softmaxes over sequence positions against the single domain or
    /// item vector; `Literal` evaluates the printed form, where keys and
    /// values come from that single vector.
    AttentionSemantics { Gated => "gated", Literal => "literal" }
);

named_enum!(
    Ablation { Full => "full", NoDa => "no_da", NoIa => "no_ia", NoDaIa => "no_da_ia" }
);

named_enum!(
    /// How the transferred user embedding is produced.
    UserTransfer {
        DomainEncoder => "domain_encoder",
        BridgeFixed => "bridge_fixed",
        BridgePersonalized => "bridge_personalized",
    }
);

impl Ablation {
    pub fn domain_level(self) -> bool {
        matches!(self, Ablation::Full | Ablation::NoIa)
    }

    pub fn item_level(self) -> bool {
        matches!(self, Ablation::Full | Ablation::NoDa)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub attn_dim: usize,
    pub max_seq_len: usize,
    /// 1 = behavior only, 2 = behavior + side info.
    pub channels: usize,
    pub encoder_hidden: Vec<usize>,
    pub head_hidden: Vec<usize>,
    pub output_mode: OutputMode,
    pub attention: AttentionSemantics,
    pub ablation: Ablation,
    pub user_transfer: UserTransfer,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            embed_dim: 16,
            attn_dim: 16,
            max_seq_len: 50,
            channels: 2,
            encoder_hidden: vec![64, 32],
            head_hidden: vec![64, 32],
            output_mode: OutputMode::Logit,
            attention: AttentionSemantics::Gated,
            ablation: Ablation::Full,
            user_transfer: UserTransfer::DomainEncoder,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.embed_dim == 0 || self.attn_dim == 0 || self.max_seq_len == 0 {
            return Err(ModelError::Config(
                "embed_dim, attn_dim and max_seq_len must be positive".into(),
            ));
        }
        if !(1..=2).contains(&self.channels) {
            return Err(ModelError::Config(format!(
                "channels must be 1 (behavior) or 2 (behavior + side info), got {}; \
                 the interaction format carries a single behavior type",
                self.channels
            )));
        }
        if self.encoder_hidden.contains(&0) || self.head_hidden.contains(&0) {
            return Err(ModelError::Config("hidden layer widths must be positive".into()));
        }
        Ok(())
    }
}
