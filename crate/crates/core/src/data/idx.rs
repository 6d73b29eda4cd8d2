//! Reading and writing the IDX binary format used by the MNIST
//! distribution: big-endian magic, dimension sizes, then raw unsigned
//! bytes. Images use magic 2051 (3 dimensions), labels 2049 (1).

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

const IMAGE_MAGIC: u32 = 2051;
const LABEL_MAGIC: u32 = 2049;

/// A stack of equally sized grayscale images.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxImages {
    pub rows: usize,
    pub cols: usize,
    /// One `rows * cols` buffer per image, row-major.
    pub images: Vec<Vec<u8>>,
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::Io {
        path: path.display().to_string(),
        source: e,
    }
}

fn read_u32(reader: &mut impl Read, path: &Path) -> Result<u32> {
    let mut buf = [0u8; 4];
    reader.read_exact(&mut buf).map_err(io_err(path))?;
    Ok(u32::from_be_bytes(buf))
}

/// Reads an IDX image file, checking the 2051 magic.
pub fn read_idx_images(path: &Path) -> Result<IdxImages> {
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    let mut reader = std::io::BufReader::new(file);
    let magic = read_u32(&mut reader, path)?;
    if magic != IMAGE_MAGIC {
        return Err(Error::Format(format!(
            "{}: expected image magic {IMAGE_MAGIC}, got {magic}",
            path.display()
        )));
    }
    let count = read_u32(&mut reader, path)? as usize;
    let rows = read_u32(&mut reader, path)? as usize;
    let cols = read_u32(&mut reader, path)? as usize;
    let mut images = Vec::with_capacity(count);
    for _ in 0..count {
        let mut img = vec![0u8; rows * cols];
        reader.read_exact(&mut img).map_err(io_err(path))?;
        images.push(img);
    }
    let mut rest = [0u8; 1];
    if reader.read(&mut rest).map_err(io_err(path))? != 0 {
        return Err(Error::Format(format!(
            "{}: trailing bytes after {count} images",
            path.display()
        )));
    }
    Ok(IdxImages { rows, cols, images })
}

/// Reads an IDX label file, checking the 2049 magic.
pub fn read_idx_labels(path: &Path) -> Result<Vec<u8>> {
    let file = std::fs::File::open(path).map_err(io_err(path))?;
    let mut reader = std::io::BufReader::new(file);
    let magic = read_u32(&mut reader, path)?;
    if magic != LABEL_MAGIC {
        return Err(Error::Format(format!(
            "{}: expected label magic {LABEL_MAGIC}, got {magic}",
            path.display()
        )));
    }
    let count = read_u32(&mut reader, path)? as usize;
    let mut labels = vec![0u8; count];
    reader.read_exact(&mut labels).map_err(io_err(path))?;
    let mut rest = [0u8; 1];
    if reader.read(&mut rest).map_err(io_err(path))? != 0 {
        return Err(Error::Format(format!(
            "{}: trailing bytes after {count} labels",
            path.display()
        )));
    }
    Ok(labels)
}

/// Writes images in IDX form.
pub fn write_idx_images(path: &Path, images: &IdxImages) -> Result<()> {
    for (i, img) in images.images.iter().enumerate() {
        if img.len() != images.rows * images.cols {
            return Err(Error::InvalidArgument(format!(
                "image {i} has {} bytes, expected {}",
                img.len(),
                images.rows * images.cols
            )));
        }
    }
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    let mut out = std::io::BufWriter::new(file);
    let mut write_all = |bytes: &[u8]| out.write_all(bytes).map_err(io_err(path));
    write_all(&IMAGE_MAGIC.to_be_bytes())?;
    write_all(&(images.images.len() as u32).to_be_bytes())?;
    write_all(&(images.rows as u32).to_be_bytes())?;
    write_all(&(images.cols as u32).to_be_bytes())?;
    for img in &images.images {
        write_all(img)?;
    }
    Ok(())
}

/// Writes labels in IDX form.
pub fn write_idx_labels(path: &Path, labels: &[u8]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    let mut out = std::io::BufWriter::new(file);
    let mut write_all = |bytes: &[u8]| out.write_all(bytes).map_err(io_err(path));
    write_all(&LABEL_MAGIC.to_be_bytes())?;
    write_all(&(labels.len() as u32).to_be_bytes())?;
    write_all(labels)?;
    Ok(())
}
