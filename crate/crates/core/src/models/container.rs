//! Binary model file.
//!
//! ```text
//! magic      8 bytes  "INFDMDL\0"
//! version    u32 LE
//! header     u32 LE length + JSON (ModelHeader)
//! vectorizer u32 LE length + JSON (Vectorizer)
//! arrays     u32 LE count, then per array:
//!            u16 LE name length + name, u8 type (0 = f64, 1 = u64),
//!            u64 LE element count + elements LE
//! ```
//!
//! The vectorizer's fingerprint is recomputed on load and must match the
//! one recorded in the header.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{
    Classifier, LinearModel, ModelError, ModelKind, ModelSpec, MultinomialNb, Node, RandomForest, TrainedModel,
    Tree,
};
use crate::preprocess::Thresholds;
use crate::vectorize::{Dims, Vectorizer};

pub const CONTAINER_MAGIC: &[u8; 8] = b"INFDMDL\0";
pub const CONTAINER_VERSION: u32 = 1;

const LEAF: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelHeader {
    pub kind: ModelKind,
    pub spec: ModelSpec,
    pub vectorizer_fingerprint: String,
    #[serde(default)]
    pub created_at: Option<String>,
    pub dims: Dims,
    #[serde(default)]
    pub thresholds: Option<Thresholds>,
}

enum Array {
    F64(Vec<f64>),
    U64(Vec<u64>),
}

fn corrupt(msg: impl Into<String>) -> ModelError {
    ModelError::Container(msg.into())
}

fn io(e: std::io::Error) -> ModelError {
    ModelError::Container(e.to_string())
}

fn encode_arrays(classifier: &Classifier) -> Vec<(&'static str, Array)> {
    match classifier {
        Classifier::Mnb(m) => vec![
            ("alpha", Array::F64(vec![m.alpha])),
            ("class_log_prior", Array::F64(m.class_log_prior.to_vec())),
            ("feature_log_prob_0", Array::F64(m.feature_log_prob[0].clone())),
            ("feature_log_prob_1", Array::F64(m.feature_log_prob[1].clone())),
        ],
        Classifier::Logreg(m) | Classifier::LinearSvm(m) => vec![
            ("weights", Array::F64(m.weights.clone())),
            ("bias", Array::F64(vec![m.bias])),
        ],
        Classifier::RandomForest(f) => {
            let mut offsets = vec![0u64];
            let (mut feature, mut threshold, mut left, mut right, mut c0, mut c1) =
                (vec![], vec![], vec![], vec![], vec![], vec![]);
            for tree in &f.trees {
                for node in &tree.nodes {
                    match *node {
                        Node::Split {
                            feature: f,
                            threshold: t,
                            left: l,
                            right: r,
                        } => {
                            feature.push(f as u64);
                            threshold.push(t);
                            left.push(l as u64);
                            right.push(r as u64);
                            c0.push(0.0);
                            c1.push(0.0);
                        }
                        Node::Leaf { counts } => {
                            feature.push(LEAF);
                            threshold.push(0.0);
                            left.push(0);
                            right.push(0);
                            c0.push(counts[0]);
                            c1.push(counts[1]);
                        }
                    }
                }
                offsets.push(feature.len() as u64);
            }
            vec![
                ("tree_offsets", Array::U64(offsets)),
                ("feature", Array::U64(feature)),
                ("threshold", Array::F64(threshold)),
                ("left", Array::U64(left)),
                ("right", Array::U64(right)),
                ("count_real", Array::F64(c0)),
                ("count_fake", Array::F64(c1)),
            ]
        }
    }
}

struct Arrays(Vec<(String, Array)>);

impl Arrays {
    fn f64(&self, name: &str) -> Result<&[f64], ModelError> {
        match self.0.iter().find(|(n, _)| n == name) {
            Some((_, Array::F64(v))) => Ok(v),
            _ => Err(corrupt(format!("missing f64 array {name}"))),
        }
    }

    fn u64(&self, name: &str) -> Result<&[u64], ModelError> {
        match self.0.iter().find(|(n, _)| n == name) {
            Some((_, Array::U64(v))) => Ok(v),
            _ => Err(corrupt(format!("missing u64 array {name}"))),
        }
    }

    fn scalar(&self, name: &str) -> Result<f64, ModelError> {
        match self.f64(name)? {
            [x] => Ok(*x),
            _ => Err(corrupt(format!("{name} must hold one value"))),
        }
    }
}

fn decode_classifier(kind: ModelKind, a: &Arrays, dims: Dims) -> Result<Classifier, ModelError> {
    let d = dims.total();
    let sized = |name: &str| -> Result<Vec<f64>, ModelError> {
        let v = a.f64(name)?;
        if v.len() != d {
            return Err(corrupt(format!("{name} has length {}, expected {d}", v.len())));
        }
        Ok(v.to_vec())
    };
    Ok(match kind {
        ModelKind::Mnb => {
            let prior = a.f64("class_log_prior")?;
            let [p0, p1] = prior else {
                return Err(corrupt("class_log_prior must hold two values"));
            };
            Classifier::Mnb(MultinomialNb {
                alpha: a.scalar("alpha")?,
                class_log_prior: [*p0, *p1],
                feature_log_prob: [sized("feature_log_prob_0")?, sized("feature_log_prob_1")?],
            })
        }
        ModelKind::Logreg | ModelKind::LinearSvm => {
            let m = LinearModel {
                weights: sized("weights")?,
                bias: a.scalar("bias")?,
            };
            if kind == ModelKind::Logreg {
                Classifier::Logreg(m)
            } else {
                Classifier::LinearSvm(m)
            }
        }
        ModelKind::RandomForest => {
            let offsets = a.u64("tree_offsets")?;
            let feature = a.u64("feature")?;
            let threshold = a.f64("threshold")?;
            let left = a.u64("left")?;
            let right = a.u64("right")?;
            let c0 = a.f64("count_real")?;
            let c1 = a.f64("count_fake")?;
            let n = feature.len();
            if [threshold.len(), left.len(), right.len(), c0.len(), c1.len()]
                .iter()
                .any(|&l| l != n)
                || offsets.first() != Some(&0)
                || offsets.last() != Some(&(n as u64))
                || offsets.windows(2).any(|w| w[0] >= w[1])
            {
                return Err(corrupt("inconsistent forest arrays"));
            }
            let mut trees = Vec::with_capacity(offsets.len() - 1);
            for w in offsets.windows(2) {
                let (lo, hi) = (w[0] as usize, w[1] as usize);
                let nodes = (lo..hi)
                    .map(|i| {
                        if feature[i] == LEAF {
                            Node::Leaf { counts: [c0[i], c1[i]] }
                        } else {
                            Node::Split {
                                feature: feature[i] as usize,
                                threshold: threshold[i],
                                left: left[i] as usize,
                                right: right[i] as usize,
                            }
                        }
                    })
                    .collect();
                let tree = Tree { nodes };
                let features_ok = tree.nodes.iter().all(|n| match n {
                    Node::Split { feature, .. } => *feature < d,
                    Node::Leaf { .. } => true,
                });
                if !tree.is_valid_binary_tree() || !features_ok {
                    return Err(corrupt("malformed tree"));
                }
                trees.push(tree);
            }
            Classifier::RandomForest(RandomForest { trees })
        }
    })
}

fn write_block<W: Write>(out: &mut W, bytes: &[u8]) -> std::io::Result<()> {
    out.write_all(&(bytes.len() as u32).to_le_bytes())?;
    out.write_all(bytes)
}

impl TrainedModel {
    pub fn header(&self) -> ModelHeader {
        ModelHeader {
            kind: self.kind(),
            spec: self.spec.clone(),
            vectorizer_fingerprint: self.vectorizer_fingerprint.clone(),
            created_at: self.created_at.clone(),
            dims: self.dims(),
            thresholds: self.thresholds.clone(),
        }
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        out.write_all(CONTAINER_MAGIC)?;
        out.write_all(&CONTAINER_VERSION.to_le_bytes())?;
        let header = serde_json::to_vec(&self.header()).expect("header serializes");
        write_block(&mut out, &header)?;
        write_block(&mut out, self.vectorizer.to_json().as_bytes())?;
        let arrays = encode_arrays(&self.classifier);
        out.write_all(&(arrays.len() as u32).to_le_bytes())?;
        for (name, array) in arrays {
            out.write_all(&(name.len() as u16).to_le_bytes())?;
            out.write_all(name.as_bytes())?;
            match array {
                Array::F64(v) => {
                    out.write_all(&[0])?;
                    out.write_all(&(v.len() as u64).to_le_bytes())?;
                    for x in v {
                        out.write_all(&x.to_le_bytes())?;
                    }
                }
                Array::U64(v) => {
                    out.write_all(&[1])?;
                    out.write_all(&(v.len() as u64).to_le_bytes())?;
                    for x in v {
                        out.write_all(&x.to_le_bytes())?;
                    }
                }
            }
        }
        out.flush()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<TrainedModel, ModelError> {
        let header = read_header_from(&mut input)?;
        let vectorizer_json = String::from_utf8(read_block(&mut input)?).map_err(|_| corrupt("vectorizer is not UTF-8"))?;
        let vectorizer = Vectorizer::from_json(&vectorizer_json)?;
        let found = vectorizer.fingerprint();
        if found != header.vectorizer_fingerprint {
            return Err(ModelError::FingerprintMismatch {
                expected: header.vectorizer_fingerprint,
                found,
            });
        }
        if vectorizer.dims() != header.dims {
            return Err(corrupt("header dimensions disagree with vectorizer"));
        }
        if header.spec.kind() != header.kind {
            return Err(corrupt("header kind disagrees with spec"));
        }
        let count = read_u32(&mut input)?;
        let mut arrays = Vec::new();
        for _ in 0..count {
            let mut len = [0u8; 2];
            input.read_exact(&mut len).map_err(io)?;
            let mut name = vec![0u8; u16::from_le_bytes(len) as usize];
            input.read_exact(&mut name).map_err(io)?;
            let name = String::from_utf8(name).map_err(|_| corrupt("array name is not UTF-8"))?;
            let mut ty = [0u8; 1];
            input.read_exact(&mut ty).map_err(io)?;
            let n = read_u64(&mut input)? as usize;
            let mut raw = vec![0u8; n.checked_mul(8).ok_or_else(|| corrupt("array too large"))?];
            input.read_exact(&mut raw).map_err(io)?;
            let words = raw.chunks_exact(8).map(|c| c.try_into().expect("8-byte chunk"));
            let array = match ty[0] {
                0 => Array::F64(words.map(f64::from_le_bytes).collect()),
                1 => Array::U64(words.map(u64::from_le_bytes).collect()),
                t => return Err(corrupt(format!("unknown array type {t}"))),
            };
            arrays.push((name, array));
        }
        let classifier = decode_classifier(header.kind, &Arrays(arrays), header.dims)?;
        Ok(TrainedModel {
            spec: header.spec,
            classifier,
            vectorizer,
            vectorizer_fingerprint: header.vectorizer_fingerprint,
            thresholds: header.thresholds,
            created_at: header.created_at,
        })
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<TrainedModel, ModelError> {
        TrainedModel::read_from(bytes)
    }
}

fn read_u32<R: Read>(input: &mut R) -> Result<u32, ModelError> {
    let mut b = [0u8; 4];
    input.read_exact(&mut b).map_err(io)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(input: &mut R) -> Result<u64, ModelError> {
    let mut b = [0u8; 8];
    input.read_exact(&mut b).map_err(io)?;
    Ok(u64::from_le_bytes(b))
}

fn read_block<R: Read>(input: &mut R) -> Result<Vec<u8>, ModelError> {
    let len = read_u32(input)? as usize;
    let mut buf = vec![0u8; len];
    input.read_exact(&mut buf).map_err(io)?;
    Ok(buf)
}

fn read_header_from<R: Read>(input: &mut R) -> Result<ModelHeader, ModelError> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic).map_err(|_| corrupt("file too short"))?;
    if &magic != CONTAINER_MAGIC {
        return Err(corrupt("not a model file"));
    }
    let version = read_u32(input)?;
    if version != CONTAINER_VERSION {
        return Err(corrupt(format!("unsupported container version {version}")));
    }
    let header = read_block(input)?;
    serde_json::from_slice(&header).map_err(|e| corrupt(format!("bad header: {e}")))
}

/// Reads only the JSON header, for inspection.
pub fn read_header<R: Read>(mut input: R) -> Result<ModelHeader, ModelError> {
    read_header_from(&mut input)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Label;
    use crate::preprocess::FeatureRow;
    use crate::vectorize::{fit, VectorizerConfig};

    fn rows() -> Vec<FeatureRow> {
        ["covid cure now", "masks work well", "cure hoax covid", "vaccine trial results"]
            .iter()
            .enumerate()
            .map(|(i, t)| FeatureRow {
                derived_text: t.to_string(),
                is_user_verified: (i % 2) as u8,
                word_count_bin: 0,
                tweet_url_count_bin: (i == 1) as u8,
                hashtag_count_bin: 1,
                user_mention_count_bin: 0,
                retweet_count_bin: (i == 3) as u8,
                account_age_bin: (i > 1) as u8,
                label: Label::from_bool(t.contains("cure")),
            })
            .collect()
    }

    #[test]
    fn round_trips_every_kind() {
        let rows = rows();
        let vectorizer = fit(&rows, &VectorizerConfig::default()).unwrap();
        for kind in ModelKind::ALL {
            let spec = ModelSpec::default_for(kind, 9);
            let mut model = TrainedModel::fit(&spec, vectorizer.clone(), &rows, None).unwrap();
            model.created_at = Some("2020-06-01T00:00:00Z".into());
            let bytes = model.to_bytes();
            let back = TrainedModel::from_bytes(&bytes).unwrap();
            assert_eq!(back, model, "{kind}");
            assert_eq!(back.to_bytes(), bytes);
            let header = read_header(&bytes[..]).unwrap();
            assert_eq!(header.kind, kind);
            assert_eq!(header.vectorizer_fingerprint, vectorizer.fingerprint());
        }
    }

    #[test]
    fn tampered_vectorizer_is_rejected() {
        let rows = rows();
        let vectorizer = fit(&rows, &VectorizerConfig::default()).unwrap();
        let model = TrainedModel::fit(&ModelSpec::default_for(ModelKind::Mnb, 0), vectorizer, &rows, None).unwrap();
        let bytes = model.to_bytes();
        let needle = b"\"documents\": 4";
        let pos = bytes
            .windows(needle.len())
            .position(|w| w == needle)
            .expect("vectorizer json present");
        let mut tampered = bytes.clone();
        tampered[pos + 13] = b'5';
        assert!(matches!(
            TrainedModel::from_bytes(&tampered),
            Err(ModelError::FingerprintMismatch { .. })
        ));
    }

    #[test]
    fn garbage_is_rejected() {
        assert!(matches!(read_header(&b"nope"[..]), Err(ModelError::Container(_))));
        let mut bytes = CONTAINER_MAGIC.to_vec();
        bytes.extend(99u32.to_le_bytes());
        assert!(matches!(TrainedModel::from_bytes(&bytes), Err(ModelError::Container(_))));
    }
}
