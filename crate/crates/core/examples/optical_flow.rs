//! Block-matching flow between two frames, rendered as a colour image and
//! embedded by the mock extractor.

use roboformer::features::{compute_flow, render_flow, FeatureExtractorConfig, Frame, FrameExtractor, MockExtractor};

/// A smooth texture translated by `(dx, dy)` pixels.
fn texture(dx: f32, dy: f32) -> Frame {
    let (w, h) = (64, 64);
    let mut data = Vec::with_capacity(w * h * 3);
    for y in 0..h {
        for x in 0..w {
            let (u, v) = (x as f32 - dx, y as f32 - dy);
            let g = 0.5 + 0.25 * (u * 0.31).sin() * (v * 0.23).cos() + 0.2 * ((u + 2.0 * v) * 0.11).sin();
            data.extend_from_slice(&[g, g, g]);
        }
    }
    Frame::new(w, h, data).expect("valid frame")
}

fn main() -> roboformer::Result<()> {
    let a = texture(0.0, 0.0);
    let b = texture(3.0, -2.0);
    let flow = compute_flow(&a, &b)?;
    let [dx, dy] = flow.at(32, 32);
    println!("flow at the centre: ({dx:.1}, {dy:.1}) px, true shift (3.0, -2.0)");

    let rendered = render_flow(&flow);
    println!(
        "rendered flow image {}x{}, centre pixel {:?}",
        rendered.width,
        rendered.height,
        rendered.pixel(32, 32)
    );

    let extractor = MockExtractor::new(
        FeatureExtractorConfig {
            input_size: 32,
            patch_size: 8,
            feature_dim: 8,
            ..FeatureExtractorConfig::default()
        },
        0,
    )?;
    let v = extractor.extract(&rendered)?;
    println!(
        "flow embedding: {:?}",
        v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>()
    );
    Ok(())
}
