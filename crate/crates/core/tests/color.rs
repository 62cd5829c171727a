use mincseg::image::{rgb_to_lab, srgb_pixel_to_lab, ColorSpace, Image};
use palette::{FromColor, Lab, Srgb};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn reference(rgb: [u8; 3]) -> [f32; 3] {
    let lab: Lab = Lab::from_color(Srgb::new(rgb[0], rgb[1], rgb[2]).into_format::<f32>().into_linear());
    [lab.l, lab.a, lab.b]
}

#[test]
fn lab_agrees_with_reference_library() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst = 0f32;
    for _ in 0..1000 {
        let rgb: [u8; 3] = rng.random();
        let ours = srgb_pixel_to_lab(rgb.map(f32::from));
        let theirs = reference(rgb);
        let de = ours.iter().zip(&theirs).map(|(a, b)| (a - b).powi(2)).sum::<f32>().sqrt();
        worst = worst.max(de);
    }
    assert!(worst < 0.5, "worst delta E {worst}");
}

#[test]
fn known_anchors() {
    let white = srgb_pixel_to_lab([255.0; 3]);
    assert!((white[0] - 100.0).abs() < 0.01 && white[1].abs() < 0.01 && white[2].abs() < 0.01);
    assert_eq!(srgb_pixel_to_lab([0.0; 3]), [0.0, 0.0, 0.0]);
    let img = Image::new(2, 1, 3, ColorSpace::SrgbU8, vec![255.0, 0.0, 0.0, 0.0, 0.0, 255.0]).unwrap();
    let lab = rgb_to_lab(&img).unwrap();
    assert_eq!(lab.space(), ColorSpace::LabF32);
    assert!((lab.pixel(0, 0)[0] - 53.24).abs() < 0.05);
    assert!((lab.pixel(1, 0)[0] - 32.30).abs() < 0.05);
}
