use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Classifier, ClassifierSpec, TrainedClassifier};
use crate::container::{read_container, write_container};
use crate::{Error, Result};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"TAACNN01";

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    spec: ClassifierSpec,
    class_names: Vec<String>,
    seed: u64,
    trained: bool,
    shapes: Vec<Vec<usize>>,
}

pub fn save_classifier(path: &Path, model: &TrainedClassifier) -> Result<()> {
    let header = Header {
        format_version: CHECKPOINT_FORMAT_VERSION,
        spec: model.spec,
        class_names: model.class_names.clone(),
        seed: model.seed,
        trained: model.trained,
        shapes: model.params().shapes(),
    };
    write_container(path, MAGIC, &header, &model.params().to_flat())
}

pub fn load_classifier(path: &Path) -> Result<TrainedClassifier> {
    let (header, payload): (Header, Vec<f64>) = read_container(path, MAGIC)?;
    let bad = |reason: String| Error::Format {
        path: path.to_path_buf(),
        reason,
    };
    if header.format_version != CHECKPOINT_FORMAT_VERSION {
        return Err(bad(format!("checkpoint format version {}", header.format_version)));
    }
    let mut model = TrainedClassifier::build(header.spec, header.class_names, header.seed)?;
    if model.params().shapes() != header.shapes || !model.params_mut().load_flat(&payload) {
        return Err(bad("weights do not match the recorded architecture".into()));
    }
    model.trained = header.trained;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::Variant;

    #[test]
    fn round_trip_preserves_weights() {
        let spec = ClassifierSpec::new(Variant::Cnn3, 3, 16).unwrap();
        let mut m = TrainedClassifier::build(spec, vec!["a".into(), "b".into(), "c".into()], 2).unwrap();
        m.trained = true;
        m.params_mut().iter_mut().next().unwrap().value[(0, 0, 0, 0)] = 0.123;
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("m.ckpt");
        save_classifier(&path, &m).unwrap();
        let back = load_classifier(&path).unwrap();
        assert_eq!(back.params().to_flat(), m.params().to_flat());
        assert_eq!(back.spec, spec);
        assert_eq!(back.class_names, m.class_names);
        assert!(back.trained);
    }
}
