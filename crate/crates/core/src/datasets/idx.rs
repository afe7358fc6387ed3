//! MNIST IDX reader. Gzip-compressed files are detected by their magic bytes
//! and decompressed transparently.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;

use super::{FeatureMatrix, LabelVector};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;
const MNIST_CLASSES: usize = 10;

fn open(path: &Path) -> Result<Box<dyn Read>> {
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut head = [0u8; 2];
    let n = file.read(&mut head).map_err(|e| Error::io(path, e))?;
    let prefix = std::io::Cursor::new(head[..n].to_vec());
    let reader = BufReader::new(prefix.chain(file));
    if n == 2 && head == [0x1f, 0x8b] {
        Ok(Box::new(GzDecoder::new(reader)))
    } else {
        Ok(Box::new(reader))
    }
}

fn read_u32(r: &mut dyn Read, path: &Path) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf).map_err(|e| Error::io(path, e))?;
    Ok(u32::from_be_bytes(buf))
}

fn read_images(path: &Path) -> Result<(Vec<u8>, usize, usize)> {
    let mut r = open(path)?;
    let magic = read_u32(&mut r, path)?;
    if magic != IMAGE_MAGIC {
        return Err(Error::Format(format!(
            "{}: image magic {magic:#010x}, expected {IMAGE_MAGIC:#010x}",
            path.display()
        )));
    }
    let count = read_u32(&mut r, path)? as usize;
    let rows = read_u32(&mut r, path)? as usize;
    let cols = read_u32(&mut r, path)? as usize;
    let mut pixels = vec![0u8; count * rows * cols];
    r.read_exact(&mut pixels).map_err(|e| Error::io(path, e))?;
    Ok((pixels, count, rows * cols))
}

fn read_labels(path: &Path) -> Result<Vec<u8>> {
    let mut r = open(path)?;
    let magic = read_u32(&mut r, path)?;
    if magic != LABEL_MAGIC {
        return Err(Error::Format(format!(
            "{}: label magic {magic:#010x}, expected {LABEL_MAGIC:#010x}",
            path.display()
        )));
    }
    let count = read_u32(&mut r, path)? as usize;
    let mut labels = vec![0u8; count];
    r.read_exact(&mut labels).map_err(|e| Error::io(path, e))?;
    Ok(labels)
}

/// Load an IDX image/label pair. Pixels are scaled to `[0, 1]` by `/255`.
pub fn load_mnist_idx<T: Scalar>(
    image_path: impl AsRef<Path>,
    label_path: impl AsRef<Path>,
) -> Result<(FeatureMatrix<T>, LabelVector)> {
    let (pixels, count, width) = read_images(image_path.as_ref())?;
    let labels = read_labels(label_path.as_ref())?;
    if labels.len() != count {
        return Err(Error::Consistency(format!(
            "{count} images but {} labels",
            labels.len()
        )));
    }
    let scale = T::from_f64_lossy(255.0);
    let values = pixels
        .iter()
        .map(|&p| T::from_f64_lossy(f64::from(p)) / scale)
        .collect();
    let features = FeatureMatrix::new(values, count, width)?;
    let labels = LabelVector::new(labels.iter().map(|&l| usize::from(l)).collect(), MNIST_CLASSES)?;
    Ok((features, labels))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

/// Write raw (uncompressed) IDX images.
pub fn write_idx_images(path: impl AsRef<Path>, pixels: &[u8], count: usize, rows: usize, cols: usize) -> Result<()> {
    let path = path.as_ref();
    if pixels.len() != count * rows * cols {
        return Err(Error::Consistency("pixel buffer size mismatch".into()));
    }
    let mut w = create(path)?;
    let mut body = Vec::with_capacity(16 + pixels.len());
    for v in [IMAGE_MAGIC, count as u32, rows as u32, cols as u32] {
        body.extend_from_slice(&v.to_be_bytes());
    }
    body.extend_from_slice(pixels);
    w.write_all(&body)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

pub fn write_idx_labels(path: impl AsRef<Path>, labels: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let mut body = Vec::with_capacity(8 + labels.len());
    body.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    body.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    body.extend_from_slice(labels);
    w.write_all(&body)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_image_loads_as_zeros() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("img");
        let lbl = dir.path().join("lbl");
        write_idx_images(&img, &[0u8; 784], 1, 28, 28).unwrap();
        write_idx_labels(&lbl, &[3]).unwrap();
        let (x, y) = load_mnist_idx::<f64>(&img, &lbl).unwrap();
        assert_eq!((x.sample_count(), x.feature_count()), (1, 784));
        assert!(x.values().iter().all(|&v| v == 0.0));
        assert_eq!(y.labels(), &[3]);
    }

    #[test]
    fn label_magic_on_image_file_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("img");
        let lbl = dir.path().join("lbl");
        write_idx_labels(&img, &[1, 2]).unwrap();
        write_idx_labels(&lbl, &[1, 2]).unwrap();
        let err = load_mnist_idx::<f32>(&img, &lbl).unwrap_err();
        assert!(matches!(err, Error::Format(_)), "{err}");
    }

    #[test]
    fn truncated_file_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("img");
        let lbl = dir.path().join("lbl");
        write_idx_images(&img, &[7u8; 2 * 4], 2, 2, 2).unwrap();
        let bytes = std::fs::read(&img).unwrap();
        std::fs::write(&img, &bytes[..bytes.len() - 3]).unwrap();
        write_idx_labels(&lbl, &[1, 2]).unwrap();
        let err = load_mnist_idx::<f32>(&img, &lbl).unwrap_err();
        assert!(matches!(err, Error::Io { .. }), "{err}");
    }

    #[test]
    fn count_mismatch_is_consistency_error() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("img");
        let lbl = dir.path().join("lbl");
        write_idx_images(&img, &[255u8; 4], 1, 2, 2).unwrap();
        write_idx_labels(&lbl, &[1, 2]).unwrap();
        let err = load_mnist_idx::<f64>(&img, &lbl).unwrap_err();
        assert!(matches!(err, Error::Consistency(_)), "{err}");
    }

    #[test]
    fn gzip_input_is_transparent() {
        use flate2::write::GzEncoder;
        let dir = tempfile::tempdir().unwrap();
        let raw = dir.path().join("img");
        write_idx_images(&raw, &[0, 51, 102, 255], 1, 2, 2).unwrap();
        let gz = dir.path().join("img.gz");
        let mut enc = GzEncoder::new(File::create(&gz).unwrap(), flate2::Compression::fast());
        enc.write_all(&std::fs::read(&raw).unwrap()).unwrap();
        enc.finish().unwrap();
        let lbl = dir.path().join("lbl");
        write_idx_labels(&lbl, &[9]).unwrap();
        let (x, _) = load_mnist_idx::<f64>(&gz, &lbl).unwrap();
        assert_eq!(x.row(0), &[0.0, 0.2, 0.4, 1.0]);
    }
}
