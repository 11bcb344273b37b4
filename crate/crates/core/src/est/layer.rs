use rand::Rng;
use serde::{Deserialize, Serialize};

use super::attention::SphericalAttention;
use super::experts::{MoeFfn, Routing};
use crate::error::{EstError, Result};
use crate::ft::SphericalTransform;
use crate::harmonics::SteerableTensor;
use crate::params::ParamStore;
use crate::so3::EquivariantLayerNorm;
use crate::tape::{Tape, Var};

/// Shape and routing of one EST layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstConfig {
    pub l_max: usize,
    pub channels: usize,
    pub heads: usize,
    pub n_steerable: usize,
    pub n_spherical: usize,
    /// Hidden width of each spherical expert.
    pub hidden: usize,
    pub routing: Routing,
    pub orientation_embed: bool,
}

impl Default for EstConfig {
    fn default() -> Self {
        Self {
            l_max: 2,
            channels: 8,
            heads: 4,
            n_steerable: 1,
            n_spherical: 1,
            hidden: 32,
            routing: Routing::Dense,
            orientation_embed: true,
        }
    }
}

impl EstConfig {
    pub fn new(l_max: usize, channels: usize) -> Self {
        Self {
            l_max,
            channels,
            hidden: 4 * channels,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 {
            return Err(EstError::invalid("an EST layer needs at least one channel"));
        }
        if self.heads == 0 || self.channels % self.heads != 0 {
            return Err(EstError::invalid(format!(
                "{} channels do not split into {} heads",
                self.channels, self.heads
            )));
        }
        if self.n_steerable + self.n_spherical == 0 {
            return Err(EstError::invalid("an EST layer needs at least one expert"));
        }
        if let Routing::TopK(k) = self.routing {
            let fams = [self.n_steerable, self.n_spherical];
            let cap = fams.iter().copied().filter(|&n| n > 0).min().unwrap_or(0);
            if k == 0 || k > cap {
                return Err(EstError::invalid(format!("top-{k} routing exceeds the smallest expert family ({cap})")));
            }
        }
        Ok(())
    }
}

/// Pre-norm attention on the sphere followed by the hybrid expert stage.
#[derive(Debug, Clone, PartialEq)]
pub struct EstLayer {
    pub config: EstConfig,
    pub norm_attn: EquivariantLayerNorm,
    /// Normalises the key/value input in cross mode.
    pub norm_kv: EquivariantLayerNorm,
    pub attn: SphericalAttention,
    pub norm_ffn: EquivariantLayerNorm,
    pub moe: MoeFfn,
}

impl EstLayer {
    pub fn new<R: Rng>(store: &mut ParamStore, name: &str, config: EstConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let (l, c) = (config.l_max, config.channels);
        Ok(Self {
            config,
            norm_attn: EquivariantLayerNorm::new(store, &format!("{name}.ln_attn"), l, c),
            norm_kv: EquivariantLayerNorm::new(store, &format!("{name}.ln_kv"), l, c),
            attn: SphericalAttention::new(store, &format!("{name}.attn"), c, config.heads, config.orientation_embed, rng)?,
            norm_ffn: EquivariantLayerNorm::new(store, &format!("{name}.ln_ffn"), l, c),
            moe: MoeFfn::new(
                store,
                &format!("{name}.moe"),
                l,
                c,
                config.n_steerable,
                config.n_spherical,
                config.hidden,
                config.routing,
                rng,
            )?,
        })
    }

    /// Self mode when `kv` is `None`; otherwise queries come from `x` and keys/values from `kv`.
    pub fn forward(&self, tape: &Tape, x: &Var, kv: Option<&Var>, ft: &SphericalTransform) -> Result<Var> {
        if ft.l_max != self.config.l_max {
            return Err(EstError::invalid(format!(
                "transform degree {} does not match layer degree {}",
                ft.l_max, self.config.l_max
            )));
        }
        let p = ft.grid.point_matrix();
        let fq = ft.forward(tape, &self.norm_attn.forward(tape, x)?)?;
        let fkv = match kv {
            Some(y) => ft.forward(tape, &self.norm_kv.forward(tape, y)?)?,
            None => fq.clone(),
        };
        let a = self.attn.forward(tape, &fq, &fkv, &fkv, &p, &p)?;
        let x1 = tape.add(x, &ft.inverse(tape, &a)?)?;
        let h = self.norm_ffn.forward(tape, &x1)?;
        tape.add(&x1, &self.moe.mix(tape, &h, ft)?)
    }
}

/// One EST layer evaluated without recording.
pub fn est_layer(
    store: &ParamStore,
    layer: &EstLayer,
    x: &SteerableTensor,
    kv: Option<&SteerableTensor>,
    ft: &SphericalTransform,
) -> Result<SteerableTensor> {
    let tape = Tape::inference(store);
    let xv = tape.constant(x.coeffs.clone());
    let kvv = kv.map(|y| tape.constant(y.coeffs.clone()));
    let y = layer.forward(&tape, &xv, kvv.as_ref(), ft)?;
    SteerableTensor::new(x.l_max, y.to_tensor())
}
