//! Encoder, item-wise modifier and recommender sharing one parameter store.

pub mod config;
pub mod encoder;
pub mod modifier;
pub mod recommender;
pub mod transformer;

pub use config::{AnchorSource, Directionality, ModelConfig, ModifierMode};
pub use encoder::{Encoded, EncodedBatch, EncoderParams};
pub use modifier::{
    InsertionDistribution, InsertionRun, ModifiedSequence, ModifierLoss, ModifierParams, ModifierStates,
    NeighborContext, Provenance, RunStop,
};
pub use recommender::{pessimistic_rank, RankingResult, RecommenderParams};
pub use transformer::{AttentionMask, Block};

use crate::autodiff::{derive_seed, ParamStore, Rng};
use crate::data::SpecialTokens;
use crate::error::Result;
use crate::seeds;

#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamStore,
    pub encoder: EncoderParams,
    pub modifier: ModifierParams,
    pub recommender: RecommenderParams,
}

impl Model {
    /// Xavier-initialised model. Every mode allocates the same parameters in
    /// the same order, so one seed gives identical weights across modes.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = Rng::new(derive_seed(seed, &[seeds::INIT]));
        let mut store = ParamStore::new();
        let d = config.dim;
        let ffn = config.ffn_mult * d;
        let tokens = SpecialTokens::new(config.n_items);
        let blocks = |store: &mut ParamStore, prefix: &str, n: usize, rng: &mut Rng| -> Vec<Block> {
            (0..n)
                .map(|l| Block::new(store, &format!("{prefix}.{l}"), d, config.heads, ffn, config.activation, rng))
                .collect()
        };

        let encoder = EncoderParams {
            item_emb: store.xavier("encoder.item_emb", &[tokens.table_rows(), d], &mut rng),
            pos_emb: store.xavier("encoder.pos_emb", &[config.max_positions(), d], &mut rng),
            blocks: blocks(&mut store, "encoder.block", config.encoder_layers, &mut rng),
        };
        let modifier = ModifierParams {
            w_op: store.xavier("modifier.w_op", &[3, d], &mut rng),
            generator_blocks: blocks(&mut store, "modifier.generator", config.generator_layers, &mut rng),
            w_co: store.xavier("modifier.w_co", &[d, d], &mut rng),
            u_co: store.xavier("modifier.u_co", &[d, d], &mut rng),
            v_co: store.xavier("modifier.v_co", &[d, 1], &mut rng),
            wp_co: store.xavier("modifier.wp_co", &[2, d], &mut rng),
            wp_all: store.xavier("modifier.wp_all", &[2, d], &mut rng),
        };
        let recommender = RecommenderParams {
            blocks: blocks(&mut store, "recommender.block", config.recommender_layers, &mut rng),
        };
        Ok(Model {
            config,
            params: store,
            encoder,
            modifier,
            recommender,
        })
    }

    pub fn tokens(&self) -> SpecialTokens {
        SpecialTokens::new(self.config.n_items)
    }

    /// Same weights, different configuration (e.g. another mode or a gate
    /// override). Shapes must agree.
    pub fn with_config(&self, config: ModelConfig) -> Result<Self> {
        let mut m = Model::new(config, 0)?;
        if m.params.len() != self.params.len()
            || m.params.iter().zip(self.params.iter()).any(|((_, a), (_, b))| a.tensor.shape != b.tensor.shape)
        {
            return Err(crate::Error::Config("configuration changes parameter shapes".into()));
        }
        m.params = self.params.clone();
        Ok(m)
    }
}
