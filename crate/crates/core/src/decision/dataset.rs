//! Demonstration dataset and checkpoint persistence.
//!
//! The dataset is a pair of files: `<stem>.bin` holds sequence-ordered
//! records (fixed header of 32-bit timestamp, mode code, v, θ followed by
//! the raw image payload) and `<stem>.idx` lists sequence boundaries so
//! training windows never straddle them.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::Rng;

use super::net::{DecisionNet, NetConfig, NetKind};
use super::tensor::Tensor;
use super::{CommandIntention, DecisionError, VelocityCommand};

const DATASET_MAGIC: &[u8; 4] = b"MNDS";
const DATASET_VERSION: u32 = 1;
const CHECKPOINT_MAGIC: &[u8; 4] = b"MNCK";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct DemoRecord {
    pub timestamp: f64,
    pub intention: CommandIntention,
    pub control: VelocityCommand,
    pub observation: Tensor,
}

#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub in_channels: usize,
    pub side: usize,
    pub records: Vec<DemoRecord>,
    /// (start, length) per demonstration sequence, in record indices.
    pub sequences: Vec<(usize, usize)>,
}

impl Dataset {
    pub fn new(in_channels: usize, side: usize) -> Dataset {
        Dataset {
            in_channels,
            side,
            records: Vec::new(),
            sequences: Vec::new(),
        }
    }

    pub fn push_sequence(&mut self, records: Vec<DemoRecord>) {
        if records.is_empty() {
            return;
        }
        for r in &records {
            assert_eq!(
                r.observation.chw(),
                (self.in_channels, self.side, self.side),
                "observation shape mismatch"
            );
            assert!(r.control.linear.abs() <= 1.0 && r.control.angular.abs() <= 1.0);
        }
        let start = self.records.len();
        self.sequences.push((start, records.len()));
        self.records.extend(records);
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Record count per intention code present in the data.
    pub fn mode_counts(&self) -> BTreeMap<u8, usize> {
        let mut counts = BTreeMap::new();
        for r in &self.records {
            *counts.entry(r.intention.code()).or_insert(0) += 1;
        }
        counts
    }

    pub fn save(&self, stem: &Path) -> Result<(), DecisionError> {
        let bin = stem.with_extension("bin");
        let mut w = BufWriter::new(File::create(bin)?);
        w.write_all(DATASET_MAGIC)?;
        w.write_u32::<LittleEndian>(DATASET_VERSION)?;
        w.write_u32::<LittleEndian>(self.in_channels as u32)?;
        w.write_u32::<LittleEndian>(self.side as u32)?;
        w.write_u32::<LittleEndian>(self.records.len() as u32)?;
        for r in &self.records {
            w.write_f32::<LittleEndian>(r.timestamp as f32)?;
            w.write_u32::<LittleEndian>(r.intention.code() as u32)?;
            w.write_f32::<LittleEndian>(r.control.linear as f32)?;
            w.write_f32::<LittleEndian>(r.control.angular as f32)?;
            for &v in &r.observation.data {
                w.write_f32::<LittleEndian>(v as f32)?;
            }
        }
        w.flush()?;
        let idx = stem.with_extension("idx");
        let doc = serde_json::json!({ "sequences": self.sequences });
        std::fs::write(idx, serde_json::to_string_pretty(&doc).expect("index json"))?;
        Ok(())
    }

    pub fn load(stem: &Path) -> Result<Dataset, DecisionError> {
        let bin = stem.with_extension("bin");
        let mut r = BufReader::new(File::open(&bin)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != DATASET_MAGIC {
            return Err(DecisionError::BadDataset(format!(
                "{}: bad magic", bin.display()
            )));
        }
        let version = r.read_u32::<LittleEndian>()?;
        if version != DATASET_VERSION {
            return Err(DecisionError::BadDataset(format!(
                "unsupported dataset version {version}"
            )));
        }
        let in_channels = r.read_u32::<LittleEndian>()? as usize;
        let side = r.read_u32::<LittleEndian>()? as usize;
        let count = r.read_u32::<LittleEndian>()? as usize;
        let payload = in_channels * side * side;
        let mut records = Vec::with_capacity(count);
        for _ in 0..count {
            let timestamp = r.read_f32::<LittleEndian>()? as f64;
            let code = r.read_u32::<LittleEndian>()?;
            let intention = u8::try_from(code)
                .ok()
                .and_then(CommandIntention::from_code)
                .ok_or_else(|| {
                    DecisionError::BadDataset(format!("unknown mode code {code}"))
                })?;
            let linear = r.read_f32::<LittleEndian>()? as f64;
            let angular = r.read_f32::<LittleEndian>()? as f64;
            let mut data = vec![0.0f64; payload];
            for v in &mut data {
                *v = r.read_f32::<LittleEndian>()? as f64;
            }
            records.push(DemoRecord {
                timestamp,
                intention,
                control: VelocityCommand { linear, angular },
                observation: Tensor::from_vec(&[in_channels, side, side], data),
            });
        }
        let idx = stem.with_extension("idx");
        let text = std::fs::read_to_string(&idx)?;
        let doc: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| DecisionError::BadDataset(format!("{}: {e}", idx.display())))?;
        let sequences: Vec<(usize, usize)> = doc
            .get("sequences")
            .and_then(|s| serde_json::from_value(s.clone()).ok())
            .ok_or_else(|| {
                DecisionError::BadDataset(format!("{}: missing sequences", idx.display()))
            })?;
        for &(start, len) in &sequences {
            if start + len > records.len() || len == 0 {
                return Err(DecisionError::BadDataset(format!(
                    "sequence ({start}, {len}) out of bounds"
                )));
            }
        }
        Ok(Dataset {
            in_channels,
            side,
            records,
            sequences,
        })
    }
}

/// Rebalances mode frequencies toward uniform by re-drawing whole same-mode
/// sub-sequences (maximal contiguous runs), preserving temporal contiguity.
/// A single-mode dataset is returned unchanged.
pub fn balance_dataset<R: Rng>(dataset: &Dataset, rng: &mut R) -> Dataset {
    // Collect maximal same-mode runs per mode.
    let mut runs: BTreeMap<u8, Vec<Vec<DemoRecord>>> = BTreeMap::new();
    for &(start, len) in &dataset.sequences {
        let mut i = start;
        while i < start + len {
            let code = dataset.records[i].intention.code();
            let mut j = i + 1;
            while j < start + len && dataset.records[j].intention.code() == code {
                j += 1;
            }
            runs.entry(code)
                .or_default()
                .push(dataset.records[i..j].to_vec());
            i = j;
        }
    }
    if runs.len() <= 1 {
        return dataset.clone();
    }
    let counts: BTreeMap<u8, usize> = runs
        .iter()
        .map(|(&c, rs)| (c, rs.iter().map(|r| r.len()).sum()))
        .collect();
    let target = *counts.values().max().expect("non-empty");
    let mut out = Dataset::new(dataset.in_channels, dataset.side);
    for (&code, mode_runs) in &runs {
        let mut emitted = 0usize;
        // Every original run once, then random re-draws until the mode
        // reaches the target count.
        for r in mode_runs {
            emitted += r.len();
            out.push_sequence(r.clone());
        }
        while emitted < target {
            let r = &mode_runs[rng.gen_range(0..mode_runs.len())];
            emitted += r.len();
            out.push_sequence(r.clone());
        }
        let _ = code;
    }
    out
}

pub fn save_checkpoint(net: &DecisionNet, path: &Path) -> Result<(), DecisionError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_u32::<LittleEndian>(CHECKPOINT_VERSION)?;
    let kind = net.config.kind.name().as_bytes();
    w.write_u32::<LittleEndian>(kind.len() as u32)?;
    w.write_all(kind)?;
    let c = &net.config;
    for v in [
        c.in_channels,
        c.input_side,
        c.channels[0],
        c.channels[1],
        c.channels[2],
        c.pooled_dim,
        c.head_hidden,
    ] {
        w.write_u32::<LittleEndian>(v as u32)?;
    }
    w.write_f64::<LittleEndian>(c.dropout)?;
    w.write_u32::<LittleEndian>(net.params.len() as u32)?;
    for (name, t) in &net.params {
        let nb = name.as_bytes();
        w.write_u32::<LittleEndian>(nb.len() as u32)?;
        w.write_all(nb)?;
        w.write_u32::<LittleEndian>(t.shape.len() as u32)?;
        for &d in &t.shape {
            w.write_u32::<LittleEndian>(d as u32)?;
        }
        for &v in &t.data {
            w.write_f64::<LittleEndian>(v)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<DecisionNet, DecisionError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(DecisionError::BadCheckpoint(format!(
            "{}: bad magic", path.display()
        )));
    }
    let version = r.read_u32::<LittleEndian>()?;
    if version != CHECKPOINT_VERSION {
        return Err(DecisionError::BadCheckpoint(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let klen = r.read_u32::<LittleEndian>()? as usize;
    let mut kbuf = vec![0u8; klen];
    r.read_exact(&mut kbuf)?;
    let kind_name = String::from_utf8(kbuf)
        .map_err(|e| DecisionError::BadCheckpoint(e.to_string()))?;
    let kind = NetKind::parse(&kind_name)?;
    let mut ints = [0usize; 7];
    for v in &mut ints {
        *v = r.read_u32::<LittleEndian>()? as usize;
    }
    let dropout = r.read_f64::<LittleEndian>()?;
    let config = NetConfig {
        kind,
        in_channels: ints[0],
        input_side: ints[1],
        channels: [ints[2], ints[3], ints[4]],
        pooled_dim: ints[5],
        head_hidden: ints[6],
        dropout,
    };
    let mut net = DecisionNet::new(config, 0);
    let count = r.read_u32::<LittleEndian>()? as usize;
    if count != net.params.len() {
        return Err(DecisionError::BadCheckpoint(format!(
            "parameter count {count} does not match architecture ({})",
            net.params.len()
        )));
    }
    for _ in 0..count {
        let nlen = r.read_u32::<LittleEndian>()? as usize;
        let mut nbuf = vec![0u8; nlen];
        r.read_exact(&mut nbuf)?;
        let name = String::from_utf8(nbuf)
            .map_err(|e| DecisionError::BadCheckpoint(e.to_string()))?;
        let rank = r.read_u32::<LittleEndian>()? as usize;
        let mut shape = vec![0usize; rank];
        for d in &mut shape {
            *d = r.read_u32::<LittleEndian>()? as usize;
        }
        let expected = net.params.get(&name).ok_or_else(|| {
            DecisionError::BadCheckpoint(format!("unknown parameter `{name}`"))
        })?;
        if expected.shape != shape {
            return Err(DecisionError::BadCheckpoint(format!(
                "parameter `{name}`: shape {shape:?} does not match {:?}",
                expected.shape
            )));
        }
        let mut data = vec![0.0f64; shape.iter().product()];
        for v in &mut data {
            *v = r.read_f64::<LittleEndian>()?;
        }
        net.params.insert(name, Tensor::from_vec(&shape, data));
    }
    Ok(net)
}
