//! Damage dataset: one FRF sample per combination of element diameters.
//!
//! On disk a dataset is a directory holding
//!
//! * `features.f32`: little-endian `f32`, row-major, one sample per row;
//! * `targets.f64`: little-endian `f64`, row-major, four diameters per row (m);
//! * `manifest.json`: everything needed to regenerate the blobs bit-identically.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::DatasetError;
use crate::fem::{frequency_response, BeamModel, Material, SweepConfig, NUM_ELEMENTS};
use crate::par::{ordered_map, Execution};

pub const FORMAT_VERSION: u32 = 1;
pub const FEATURES_FILE: &str = "features.f32";
pub const TARGETS_FILE: &str = "targets.f64";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Normalization {
    /// Divide the concatenated vector by its largest magnitude.
    #[default]
    MaxAbs,
    None,
}

impl Normalization {
    pub fn apply(self, v: &mut [f64]) {
        match self {
            Normalization::MaxAbs => {
                let peak = v.iter().fold(0.0_f64, |a, &x| a.max(x.abs()));
                if peak > 0.0 {
                    v.iter_mut().for_each(|x| *x /= peak);
                }
            }
            Normalization::None => {}
        }
    }
}

/// Diameter levels (m) for each of the four elements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiameterGrid {
    pub levels: [Vec<f64>; NUM_ELEMENTS],
}

impl DiameterGrid {
    /// `count` equally spaced levels in `[min, max]` for every element.
    pub fn uniform(min: f64, max: f64, count: usize) -> Result<Self, DatasetError> {
        if count < 2 || !(min > 0.0) || !(max > min) || !max.is_finite() {
            return Err(DatasetError::InvalidGrid(format!(
                "{count} levels over [{min}, {max}]"
            )));
        }
        let step = (max - min) / (count - 1) as f64;
        let levels: Vec<f64> = (0..count)
            .map(|i| if i + 1 == count { max } else { min + step * i as f64 })
            .collect();
        Ok(Self {
            levels: std::array::from_fn(|_| levels.clone()),
        })
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        for (e, lv) in self.levels.iter().enumerate() {
            if lv.len() < 2 {
                return Err(DatasetError::InvalidGrid(format!("element E{} has {} levels", e + 1, lv.len())));
            }
            if lv.iter().any(|&d| !(d > 0.0) || !d.is_finite()) {
                return Err(DatasetError::InvalidGrid(format!("element E{} has a non-positive level", e + 1)));
            }
        }
        Ok(())
    }

    pub fn num_samples(&self) -> usize {
        self.levels.iter().map(Vec::len).product()
    }

    /// Diameters of sample `index`; E1 varies slowest, E4 fastest.
    pub fn diameters(&self, index: usize) -> [f64; NUM_ELEMENTS] {
        let mut rem = index;
        let mut out = [0.0; NUM_ELEMENTS];
        for e in (0..NUM_ELEMENTS).rev() {
            let n = self.levels[e].len();
            out[e] = self.levels[e][rem % n];
            rem /= n;
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrfSample {
    pub features: Vec<f64>,
    pub targets: [f64; NUM_ELEMENTS],
}

/// Sweeps one beam and concatenates the response-node traces in the sweep's
/// node order, then normalizes the whole vector.
pub fn build_sample(
    model: &BeamModel,
    sweep: &SweepConfig,
    normalization: Normalization,
) -> Result<FrfSample, DatasetError> {
    let system = model.assemble()?;
    let traces = frequency_response(&system, sweep, &model.material)?;
    let mut features = Vec::with_capacity(sweep.feature_length());
    for t in traces {
        features.extend(t);
    }
    normalization.apply(&mut features);
    Ok(FrfSample {
        features,
        targets: model.diameters,
    })
}

/// Everything that determines a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub length_total: f64,
    pub material: Material,
    pub sweep: SweepConfig,
    pub grid: DiameterGrid,
    pub normalization: Normalization,
    pub seed: u64,
}

impl DatasetSpec {
    /// 11 levels per element over 0.005–0.015 m, 10,000 points per node.
    pub fn full_paper() -> Self {
        Self {
            length_total: 1.0,
            material: Material::default(),
            sweep: SweepConfig::default(),
            grid: DiameterGrid::uniform(0.005, 0.015, 11).expect("static grid"),
            normalization: Normalization::MaxAbs,
            seed: 0,
        }
    }

    /// 5 levels per element, 500 points per node.
    pub fn desk() -> Self {
        Self {
            sweep: SweepConfig::with_points(500),
            grid: DiameterGrid::uniform(0.005, 0.015, 5).expect("static grid"),
            ..Self::full_paper()
        }
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        self.sweep.validate()?;
        self.grid.validate()?;
        self.model(0)?;
        Ok(())
    }

    pub fn num_samples(&self) -> usize {
        self.grid.num_samples()
    }

    pub fn feature_length(&self) -> usize {
        self.sweep.feature_length()
    }

    pub fn model(&self, index: usize) -> Result<BeamModel, DatasetError> {
        Ok(BeamModel::new(self.length_total, self.grid.diameters(index), self.material)?)
    }

    pub fn sample(&self, index: usize) -> Result<FrfSample, DatasetError> {
        build_sample(&self.model(index)?, &self.sweep, self.normalization)
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            format_version: FORMAT_VERSION,
            n_samples: self.num_samples(),
            feature_length: self.feature_length(),
            spec: self.clone(),
            frequency_spacing: "linear-inclusive".into(),
            response_quantity: "acceleration-magnitude".into(),
            sample_order: "lexicographic over element level indices, E1 slowest".into(),
            grid_note: format!(
                "{} levels per element give {} samples",
                self.grid.levels[0].len(),
                self.num_samples()
            ),
            features: BlobInfo {
                file: FEATURES_FILE.into(),
                dtype: "f32-le".into(),
                rows: self.num_samples(),
                cols: self.feature_length(),
            },
            targets: BlobInfo {
                file: TARGETS_FILE.into(),
                dtype: "f64-le".into(),
                rows: self.num_samples(),
                cols: NUM_ELEMENTS,
            },
        }
    }

    /// Generates every sample and hands them to `sink` in index order.
    /// Work is done in chunks so memory stays bounded for the full grid.
    pub fn generate_streaming<F>(&self, exec: Execution, mut sink: F) -> Result<(), DatasetError>
    where
        F: FnMut(usize, FrfSample) -> Result<(), DatasetError>,
    {
        self.validate()?;
        let total = self.num_samples();
        let chunk = 256 * crate::par::workers().max(1);
        let mut start = 0;
        while start < total {
            let len = chunk.min(total - start);
            let batch = ordered_map(exec, len, |i| self.sample(start + i));
            for (i, s) in batch.into_iter().enumerate() {
                sink(start + i, s?)?;
            }
            start += len;
        }
        Ok(())
    }

    pub fn generate(&self, exec: Execution) -> Result<FrfDataset, DatasetError> {
        let n = self.num_samples();
        let mut features = Vec::with_capacity(n * self.feature_length());
        let mut targets = Vec::with_capacity(n);
        self.generate_streaming(exec, |_, s| {
            features.extend(s.features.iter().map(|&x| x as f32));
            targets.push(s.targets);
            Ok(())
        })?;
        Ok(FrfDataset {
            manifest: self.manifest(),
            features,
            targets,
        })
    }

    /// Streams the dataset straight to `dir` without holding it in memory.
    pub fn write_to(&self, dir: &Path, exec: Execution) -> Result<Manifest, DatasetError> {
        std::fs::create_dir_all(dir)?;
        let manifest = self.manifest();
        let mut fw = BufWriter::new(File::create(dir.join(FEATURES_FILE))?);
        let mut tw = BufWriter::new(File::create(dir.join(TARGETS_FILE))?);
        self.generate_streaming(exec, |_, s| {
            write_f32s(&mut fw, s.features.iter().map(|&x| x as f32))?;
            write_f64s(&mut tw, s.targets.iter().copied())?;
            Ok(())
        })?;
        fw.flush()?;
        tw.flush()?;
        write_manifest(dir, &manifest)?;
        Ok(manifest)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlobInfo {
    pub file: String,
    pub dtype: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub n_samples: usize,
    pub feature_length: usize,
    pub spec: DatasetSpec,
    pub frequency_spacing: String,
    pub response_quantity: String,
    pub sample_order: String,
    pub grid_note: String,
    pub features: BlobInfo,
    pub targets: BlobInfo,
}

impl Manifest {
    pub fn read(dir: &Path) -> Result<Self, DatasetError> {
        let m: Manifest = serde_json::from_reader(BufReader::new(File::open(dir.join(MANIFEST_FILE))?))?;
        if m.format_version != FORMAT_VERSION {
            return Err(DatasetError::Malformed(format!("format version {}", m.format_version)));
        }
        Ok(m)
    }
}

fn write_manifest(dir: &Path, m: &Manifest) -> Result<(), DatasetError> {
    let mut w = BufWriter::new(File::create(dir.join(MANIFEST_FILE))?);
    serde_json::to_writer_pretty(&mut w, m)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn write_f32s<W: Write>(w: &mut W, it: impl Iterator<Item = f32>) -> std::io::Result<()> {
    for x in it {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

fn write_f64s<W: Write>(w: &mut W, it: impl Iterator<Item = f64>) -> std::io::Result<()> {
    for x in it {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

/// In-memory dataset: row-major `f32` features and `f64` diameter targets.
#[derive(Debug, Clone, PartialEq)]
pub struct FrfDataset {
    pub manifest: Manifest,
    pub features: Vec<f32>,
    pub targets: Vec<[f64; NUM_ELEMENTS]>,
}

impl FrfDataset {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn feature_length(&self) -> usize {
        self.manifest.feature_length
    }

    pub fn row(&self, i: usize) -> &[f32] {
        let n = self.feature_length();
        &self.features[i * n..(i + 1) * n]
    }

    pub fn row_f64(&self, i: usize) -> Vec<f64> {
        self.row(i).iter().map(|&x| x as f64).collect()
    }

    pub fn write(&self, dir: &Path) -> Result<(), DatasetError> {
        std::fs::create_dir_all(dir)?;
        let mut fw = BufWriter::new(File::create(dir.join(FEATURES_FILE))?);
        write_f32s(&mut fw, self.features.iter().copied())?;
        fw.flush()?;
        let mut tw = BufWriter::new(File::create(dir.join(TARGETS_FILE))?);
        write_f64s(&mut tw, self.targets.iter().flatten().copied())?;
        tw.flush()?;
        write_manifest(dir, &self.manifest)
    }

    pub fn load(dir: &Path) -> Result<Self, DatasetError> {
        let manifest = Manifest::read(dir)?;
        let (rows, cols) = (manifest.n_samples, manifest.feature_length);
        let features: Vec<f32> = read_blob(&dir.join(&manifest.features.file), rows * cols, 4)?
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        let flat: Vec<f64> = read_blob(&dir.join(&manifest.targets.file), rows * NUM_ELEMENTS, 8)?
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        let targets = flat
            .chunks_exact(NUM_ELEMENTS)
            .map(|c| [c[0], c[1], c[2], c[3]])
            .collect();
        Ok(Self {
            manifest,
            features,
            targets,
        })
    }

    /// Inspection export: one row per sample, the four diameters followed by
    /// at most `max_features` leading features.
    pub fn export_csv(&self, path: &Path, max_features: usize) -> Result<(), DatasetError> {
        let mut w = csv::Writer::from_path(path)?;
        let n = self.feature_length().min(max_features);
        let mut header: Vec<String> = (1..=NUM_ELEMENTS).map(|e| format!("d{e}")).collect();
        header.extend((0..n).map(|j| format!("f{j}")));
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec: Vec<String> = self.targets[i].iter().map(|d| d.to_string()).collect();
            rec.extend(self.row(i)[..n].iter().map(|x| x.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn read_blob(path: &Path, count: usize, width: usize) -> Result<Vec<u8>, DatasetError> {
    let mut buf = Vec::with_capacity(count * width);
    File::open(path)?.read_to_end(&mut buf)?;
    if buf.len() != count * width {
        return Err(DatasetError::Malformed(format!(
            "{} holds {} bytes, expected {}",
            path.display(),
            buf.len(),
            count * width
        )));
    }
    Ok(buf)
}
