use ndarray::Array4;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Index of a tensor inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub value: Array4<f64>,
}

/// Ordered collection of trainable tensors.
///
/// Registration order is the serialization order, so two stores built by the
/// same code agree on layout.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Array4<f64>) -> ParamId {
        self.params.push(Param {
            name: name.into(),
            value,
        });
        ParamId(self.params.len() - 1)
    }

    /// He-uniform weights for a layer with `fan_in` inputs.
    pub fn add_he_uniform(
        &mut self,
        name: impl Into<String>,
        shape: (usize, usize, usize, usize),
        fan_in: usize,
        rng: &mut ChaCha8Rng,
    ) -> ParamId {
        let bound = (6.0 / fan_in as f64).sqrt();
        let value = Array4::from_shape_simple_fn(shape, || rng.gen_range(-bound..bound));
        self.add(name, value)
    }

    pub fn add_zeros(&mut self, name: impl Into<String>, shape: (usize, usize, usize, usize)) -> ParamId {
        self.add(name, Array4::zeros(shape))
    }

    pub fn get(&self, id: ParamId) -> &Array4<f64> {
        &self.params[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Array4<f64> {
        &mut self.params[id.0].value
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    /// Total number of scalar weights.
    pub fn num_values(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn shapes(&self) -> Vec<Vec<usize>> {
        self.params.iter().map(|p| p.value.shape().to_vec()).collect()
    }

    /// All weights concatenated in registration order.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_values());
        for p in &self.params {
            out.extend(p.value.iter().copied());
        }
        out
    }

    /// Inverse of [`ParamStore::to_flat`]; returns false if the length differs.
    pub fn load_flat(&mut self, flat: &[f64]) -> bool {
        if flat.len() != self.num_values() {
            return false;
        }
        let mut offset = 0;
        for p in &mut self.params {
            let n = p.value.len();
            for (dst, src) in p.value.iter_mut().zip(&flat[offset..offset + n]) {
                *dst = *src;
            }
            offset += n;
        }
        true
    }
}
