//! RGB timestamps, flow pairs and test-time augmentation variants for one
//! segment.

use roboformer::sampling::{sample_input, tta_variants, SamplingConfig};

fn main() -> roboformer::Result<()> {
    let config = SamplingConfig::default();
    let (start, end, fps) = (12.0, 15.5, 30.0);

    let base = sample_input(start, end, fps, &config, 0)?;
    println!("rgb:  {:?}", base.rgb);
    println!("flow: {:?}", base.flow);

    // offsets that would push the last flow pair past the segment are dropped
    for v in tta_variants(start, end, fps, &config)? {
        println!(
            "offset {:>2} frames: {} frames from {:.3} s",
            v.offset_frames,
            v.rgb.len(),
            v.rgb[0]
        );
    }

    let long = SamplingConfig {
        max_frames: 8,
        ..config
    };
    let capped = sample_input(0.0, 60.0, fps, &long, 0)?;
    println!("a 60 s segment capped at {} frames: {:?}", capped.rgb.len(), capped.rgb);
    Ok(())
}
