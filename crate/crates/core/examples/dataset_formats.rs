//! Write a synthetic dataset as IDX and CIFAR-10 binary files, read both back
//! and check the bytes survive the round trip.

use noisemod::data::{
    encode_cifar10_records, load_cifar10_binary, load_idx, synthetic_dataset, write_idx, SyntheticSpec,
};
use noisemod::RngStream;

fn main() -> noisemod::Result<()> {
    let dir = std::env::temp_dir().join("noisemod-formats");
    std::fs::create_dir_all(&dir)?;

    let gray = synthetic_dataset(&SyntheticSpec { count: 50, ..SyntheticSpec::default() }, &mut RngStream::new(0))?;
    let (images, labels) = (dir.join("images-idx3-ubyte"), dir.join("labels-idx1-ubyte"));
    write_idx(&gray, &images, &labels)?;
    let back = load_idx(&images, &labels)?;
    println!("idx: {} images of {:?}, labels equal: {}", back.len(), back.image_shape(), back.labels == gray.labels);

    let rgb_spec = SyntheticSpec { count: 20, shape: [3, 32, 32], ..SyntheticSpec::default() };
    let rgb = synthetic_dataset(&rgb_spec, &mut RngStream::new(1))?;
    let bytes = encode_cifar10_records(&rgb.images, &rgb.labels)?;
    let path = dir.join("data_batch_1.bin");
    std::fs::write(&path, &bytes)?;
    let back = load_cifar10_binary(&[&path])?;
    let again = encode_cifar10_records(&back.images, &back.labels)?;
    println!("cifar10: {} records, {} bytes, identical after reload: {}", back.len(), bytes.len(), again == bytes);
    Ok(())
}
