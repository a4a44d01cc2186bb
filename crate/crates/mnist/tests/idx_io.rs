use std::io::Write;

use flate2::write::GzEncoder;
use flate2::Compression;
use gentune_mnist::dataset::{load_labeled, split, SplitSizes};
use gentune_mnist::idx::{IdxTensor, MAGIC_IMAGES, MAGIC_LABELS};
use gentune_mnist::MnistError;

fn write_gz(path: &std::path::Path, bytes: &[u8]) {
    let mut enc = GzEncoder::new(std::fs::File::create(path).unwrap(), Compression::default());
    enc.write_all(bytes).unwrap();
    enc.finish().unwrap();
}

fn synthetic(n: usize) -> (IdxTensor, IdxTensor) {
    let images = IdxTensor {
        magic: MAGIC_IMAGES,
        dims: vec![n, 2, 3],
        data: (0..n * 6).map(|k| (k * 37 % 256) as u8).collect(),
    };
    let labels = IdxTensor {
        magic: MAGIC_LABELS,
        dims: vec![n],
        data: (0..n).map(|k| (k % 10) as u8).collect(),
    };
    (images, labels)
}

#[test]
fn gzipped_and_plain_files_load_identically() {
    let dir = tempfile::tempdir().unwrap();
    let (images, labels) = synthetic(7);
    write_gz(&dir.path().join("img.gz"), &images.to_bytes());
    write_gz(&dir.path().join("lab.gz"), &labels.to_bytes());
    std::fs::write(dir.path().join("img"), images.to_bytes()).unwrap();
    std::fs::write(dir.path().join("lab"), labels.to_bytes()).unwrap();
    let a = load_labeled(&dir.path().join("img.gz"), &dir.path().join("lab.gz")).unwrap();
    let b = load_labeled(&dir.path().join("img"), &dir.path().join("lab")).unwrap();
    assert_eq!(a.images, b.images);
    assert_eq!(a.labels, b.labels);
    assert_eq!((a.pixels(), a.len()), (6, 7));
    assert_eq!(a.images[(1, 0)], 37.0 / 255.0);
}

#[test]
fn swapped_files_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (images, labels) = synthetic(3);
    std::fs::write(dir.path().join("img"), images.to_bytes()).unwrap();
    std::fs::write(dir.path().join("lab"), labels.to_bytes()).unwrap();
    let err = load_labeled(&dir.path().join("lab"), &dir.path().join("img")).unwrap_err();
    assert!(matches!(err, MnistError::Idx(_)), "{err}");
}

#[test]
fn split_takes_consecutive_blocks() {
    let dir = tempfile::tempdir().unwrap();
    let (images, labels) = synthetic(10);
    std::fs::write(dir.path().join("img"), images.to_bytes()).unwrap();
    std::fs::write(dir.path().join("lab"), labels.to_bytes()).unwrap();
    let all = load_labeled(&dir.path().join("img"), &dir.path().join("lab")).unwrap();
    let s = split(
        &all,
        SplitSizes {
            train: 5,
            validation: 3,
            test: 2,
        },
    )
    .unwrap();
    assert_eq!(s.train.labels, vec![0, 1, 2, 3, 4]);
    assert_eq!(s.validation.labels, vec![5, 6, 7]);
    assert_eq!(s.test.labels, vec![8, 9]);
    assert!(split(
        &all,
        SplitSizes {
            train: 8,
            validation: 3,
            test: 0
        }
    )
    .is_err());
}
