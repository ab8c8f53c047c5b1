use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Victim network: three 3x3 conv layers with ReLU, flatten, dense, softmax.
    Cnn,
    /// One extra conv + ReLU before the flatten.
    Cnn2,
    /// `Cnn2` plus a ReLU after the dense layer.
    Cnn3,
    /// `Cnn` with every ReLU replaced by tanh.
    Cnn4,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Cnn, Variant::Cnn2, Variant::Cnn3, Variant::Cnn4];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Cnn => "cnn",
            Variant::Cnn2 => "cnn2",
            Variant::Cnn3 => "cnn3",
            Variant::Cnn4 => "cnn4",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown classifier variant `{s}` (expected cnn, cnn2, cnn3 or cnn4)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layer {
    /// 3x3 stride-1 convolution with zero padding 1.
    Conv { filters: usize },
    MaxPool2,
    Relu,
    Tanh,
    Flatten,
    Dense { units: usize },
    Softmax,
}

impl Layer {
    pub fn is_nonlinearity(self) -> bool {
        matches!(self, Layer::Relu | Layer::Tanh)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierSpec {
    pub variant: Variant,
    pub num_classes: usize,
    pub input_side: usize,
}

impl ClassifierSpec {
    pub fn new(variant: Variant, num_classes: usize, input_side: usize) -> Result<Self> {
        let spec = Self {
            variant,
            num_classes,
            input_side,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::InvalidArgument(format!(
                "a classifier needs at least 2 classes, got {}",
                self.num_classes
            )));
        }
        if self.input_side < 8 || self.input_side % 4 != 0 {
            return Err(Error::InvalidArgument(format!(
                "input side must be a multiple of 4 and at least 8, got {}",
                self.input_side
            )));
        }
        Ok(())
    }

    /// The full layer sequence, softmax included.
    pub fn layers(&self) -> Vec<Layer> {
        let act = match self.variant {
            Variant::Cnn4 => Layer::Tanh,
            _ => Layer::Relu,
        };
        let mut layers = vec![
            Layer::Conv { filters: 32 },
            act,
            Layer::MaxPool2,
            Layer::Conv { filters: 64 },
            act,
            Layer::MaxPool2,
            Layer::Conv { filters: 128 },
            act,
        ];
        if matches!(self.variant, Variant::Cnn2 | Variant::Cnn3) {
            layers.extend([Layer::Conv { filters: 128 }, act]);
        }
        layers.extend([Layer::Flatten, Layer::Dense { units: self.num_classes }]);
        if self.variant == Variant::Cnn3 {
            layers.push(Layer::Relu);
        }
        layers.push(Layer::Softmax);
        layers
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn count(layers: &[Layer], f: impl Fn(&Layer) -> bool) -> usize {
        layers.iter().filter(|l| f(l)).count()
    }

    #[test]
    fn variant_structure() {
        let base = ClassifierSpec::new(Variant::Cnn, 26, 32).unwrap().layers();
        let cnn2 = ClassifierSpec::new(Variant::Cnn2, 26, 32).unwrap().layers();
        let cnn3 = ClassifierSpec::new(Variant::Cnn3, 26, 32).unwrap().layers();
        let cnn4 = ClassifierSpec::new(Variant::Cnn4, 26, 32).unwrap().layers();
        let convs = |l: &[Layer]| count(l, |x| matches!(x, Layer::Conv { .. }));
        let nonlin = |l: &[Layer]| count(l, |x| x.is_nonlinearity());

        assert_eq!(convs(&base), 3);
        assert_eq!(nonlin(&base), 3);
        assert_eq!(convs(&cnn2) - convs(&base), 1);
        assert_eq!(nonlin(&cnn2) - nonlin(&base), 1);
        assert_eq!(convs(&cnn3), convs(&cnn2));
        assert_eq!(nonlin(&cnn3) - nonlin(&cnn2), 1);
        assert_eq!(count(&cnn4, |x| *x == Layer::Relu), 0);
        assert_eq!(count(&cnn4, |x| *x == Layer::Tanh), nonlin(&base));
        for (a, b) in base.iter().zip(&cnn4) {
            assert_eq!(*a == Layer::Relu, *b == Layer::Tanh);
        }
        assert_eq!(base.last(), Some(&Layer::Softmax));
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(ClassifierSpec::new(Variant::Cnn, 1, 32).is_err());
        assert!(ClassifierSpec::new(Variant::Cnn, 5, 30).is_err());
        assert!("cnn5".parse::<Variant>().is_err());
        assert_eq!("cnn3".parse::<Variant>().unwrap(), Variant::Cnn3);
    }
}
