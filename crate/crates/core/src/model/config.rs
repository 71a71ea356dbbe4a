use std::fmt;
use std::str::FromStr;

use super::ModelError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OpKind {
    SeparableConv,
    DilatedSeparableConv,
    AvgPool,
}

/// One branch of the operation layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct OpDescriptor {
    pub kind: OpKind,
    pub filter_size: usize,
    pub dilation: usize,
}

impl OpDescriptor {
    pub const fn separable(filter_size: usize) -> Self {
        OpDescriptor {
            kind: OpKind::SeparableConv,
            filter_size,
            dilation: 1,
        }
    }

    pub const fn dilated(filter_size: usize) -> Self {
        OpDescriptor {
            kind: OpKind::DilatedSeparableConv,
            filter_size,
            dilation: 2,
        }
    }

    pub const fn avg_pool(filter_size: usize) -> Self {
        OpDescriptor {
            kind: OpKind::AvgPool,
            filter_size,
            dilation: 1,
        }
    }

    /// The eight branches used throughout: separable 1/3/5/7, dilated
    /// separable 3/5/7 (dilation 2), 3×3 average pooling.
    pub fn default_set() -> Vec<OpDescriptor> {
        vec![
            Self::separable(1),
            Self::separable(3),
            Self::separable(5),
            Self::separable(7),
            Self::dilated(3),
            Self::dilated(5),
            Self::dilated(7),
            Self::avg_pool(3),
        ]
    }

    pub fn has_params(&self) -> bool {
        self.kind != OpKind::AvgPool
    }

    pub fn has_depthwise(&self) -> bool {
        self.has_params() && self.filter_size > 1
    }
}

impl fmt::Display for OpDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            OpKind::SeparableConv => write!(f, "sep{}", self.filter_size),
            OpKind::DilatedSeparableConv if self.dilation == 2 => write!(f, "dil{}", self.filter_size),
            OpKind::DilatedSeparableConv => write!(f, "dil{}d{}", self.filter_size, self.dilation),
            OpKind::AvgPool => write!(f, "pool{}", self.filter_size),
        }
    }
}

impl FromStr for OpDescriptor {
    type Err = ModelError;

    /// Parses `sep<f>`, `dil<f>` (dilation 2), `dil<f>d<k>` or `pool<f>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ModelError::Config(format!("unknown operation `{s}`"));
        let num = |t: &str| t.parse::<usize>().map_err(|_| bad());
        let s = s.trim();
        if let Some(rest) = s.strip_prefix("sep") {
            Ok(Self::separable(num(rest)?))
        } else if let Some(rest) = s.strip_prefix("dil") {
            match rest.split_once('d') {
                Some((f, d)) => Ok(OpDescriptor {
                    kind: OpKind::DilatedSeparableConv,
                    filter_size: num(f)?,
                    dilation: num(d)?,
                }),
                None => Ok(Self::dilated(num(rest)?)),
            }
        } else if let Some(rest) = s.strip_prefix("pool") {
            Ok(Self::avg_pool(num(rest)?))
        } else {
            Err(bad())
        }
    }
}

/// How the per-operation weights of each layer are produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AttentionMode {
    /// Input-dependent group attention.
    Learned,
    /// All weights fixed to 1 ("w/o attention" baseline).
    None,
    /// Input-independent softmax of trainable per-layer logits.
    Fixed,
}

impl fmt::Display for AttentionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AttentionMode::Learned => "learned",
            AttentionMode::None => "none",
            AttentionMode::Fixed => "fixed",
        })
    }
}

impl FromStr for AttentionMode {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "learned" => Ok(AttentionMode::Learned),
            "none" => Ok(AttentionMode::None),
            "fixed" => Ok(AttentionMode::Fixed),
            other => Err(ModelError::Config(format!(
                "attention_mode must be learned, none or fixed, got `{other}`"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct OwanConfig {
    /// Number of operation-wise attention layers.
    pub layers: usize,
    /// Layers sharing one group-attention computation.
    pub group_size: usize,
    pub channels: usize,
    /// Hidden width of the attention MLP.
    pub attention_hidden: usize,
    pub res_blocks: usize,
    pub in_channels: usize,
    pub ops: Vec<OpDescriptor>,
    pub attention_mode: AttentionMode,
}

impl Default for OwanConfig {
    fn default() -> Self {
        OwanConfig {
            layers: 40,
            group_size: 4,
            channels: 16,
            attention_hidden: 32,
            res_blocks: 4,
            in_channels: 3,
            ops: OpDescriptor::default_set(),
            attention_mode: AttentionMode::Learned,
        }
    }
}

impl OwanConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let err = |m: String| Err(ModelError::Config(m));
        if self.group_size == 0 {
            return err("group_size must be positive".into());
        }
        if self.layers % self.group_size != 0 {
            return err(format!(
                "layers ({}) must be divisible by group_size ({})",
                self.layers, self.group_size
            ));
        }
        if self.channels == 0 || self.attention_hidden == 0 {
            return err("channels and attention_hidden must be positive".into());
        }
        if !matches!(self.in_channels, 1 | 3) {
            return err(format!("in_channels must be 1 or 3, got {}", self.in_channels));
        }
        if self.ops.is_empty() {
            return err("at least one operation is required".into());
        }
        for op in &self.ops {
            if op.filter_size % 2 == 0 || op.dilation == 0 {
                return err(format!("invalid operation {op}: odd filter and positive dilation required"));
            }
        }
        Ok(())
    }

    pub fn groups(&self) -> usize {
        self.layers / self.group_size
    }

    pub fn num_ops(&self) -> usize {
        self.ops.len()
    }

    /// Comma-separated operation list, e.g. `sep1,sep3,...,pool3`.
    pub fn ops_string(&self) -> String {
        self.ops
            .iter()
            .map(ToString::to_string)
            .collect::<Vec<_>>()
            .join(",")
    }

    pub fn parse_ops(s: &str) -> Result<Vec<OpDescriptor>, ModelError> {
        s.split(',').map(str::parse).collect()
    }

    /// `(key, value)` pairs covering every field, in a fixed order.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("layers", self.layers.to_string()),
            ("group_size", self.group_size.to_string()),
            ("channels", self.channels.to_string()),
            ("attention_hidden", self.attention_hidden.to_string()),
            ("res_blocks", self.res_blocks.to_string()),
            ("in_channels", self.in_channels.to_string()),
            ("ops", self.ops_string()),
            ("attention_mode", self.attention_mode.to_string()),
        ]
    }

    /// Applies one `key=value` setting. Returns `Ok(false)` for keys that do
    /// not belong to the model.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool, ModelError> {
        let int = |v: &str| {
            v.trim()
                .parse::<usize>()
                .map_err(|_| ModelError::Config(format!("{key}: expected an integer, got `{v}`")))
        };
        match key {
            "layers" => self.layers = int(value)?,
            "group_size" => self.group_size = int(value)?,
            "channels" => self.channels = int(value)?,
            "attention_hidden" => self.attention_hidden = int(value)?,
            "res_blocks" => self.res_blocks = int(value)?,
            "in_channels" => self.in_channels = int(value)?,
            "ops" => self.ops = Self::parse_ops(value)?,
            "attention_mode" => self.attention_mode = value.parse()?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_matches_reference_architecture() {
        let c = OwanConfig::default();
        assert_eq!(c.layers, 40);
        assert_eq!(c.groups(), 10);
        assert_eq!(c.num_ops(), 8);
        assert_eq!(c.attention_hidden, 32);
        assert_eq!(c.channels, 16);
        assert_eq!(c.res_blocks, 4);
        c.validate().unwrap();
    }

    #[test]
    fn indivisible_layers_rejected() {
        let c = OwanConfig {
            layers: 6,
            ..Default::default()
        };
        assert!(matches!(c.validate(), Err(ModelError::Config(_))));
    }

    #[test]
    fn ops_string_round_trips() {
        let c = OwanConfig::default();
        assert_eq!(c.ops_string(), "sep1,sep3,sep5,sep7,dil3,dil5,dil7,pool3");
        assert_eq!(OwanConfig::parse_ops(&c.ops_string()).unwrap(), c.ops);
        assert_eq!("dil3d4".parse::<OpDescriptor>().unwrap().dilation, 4);
        assert!("conv3".parse::<OpDescriptor>().is_err());
    }

    #[test]
    fn pairs_round_trip_through_set() {
        let c = OwanConfig {
            layers: 8,
            attention_mode: AttentionMode::Fixed,
            ..Default::default()
        };
        let mut d = OwanConfig::default();
        for (k, v) in c.to_pairs() {
            assert!(d.set(k, &v).unwrap());
        }
        assert_eq!(c, d);
        assert!(!d.set("epochs", "3").unwrap());
    }
}
