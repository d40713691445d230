use std::path::Path;

use proptest::prelude::*;
use retouch_core::model_io::{decode_model, encode_model};
use retouch_core::pyramid::{decompose, reconstruct};
use retouch_core::{
    apply_model, load_image, load_model, psnr, save_image, save_model, score_transfer, ssim, train,
    train_transfer, ChannelMode, Error, FilterSpec, ImageBuf, MapKind, RetouchModel, TrainConfig,
};

fn data(rel: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(rel)
}

/// Top-left `size` x `size` window of an image.
fn window(img: &ImageBuf, size: usize) -> ImageBuf {
    let c = img.channels();
    let mut px = Vec::with_capacity(size * size * c);
    for y in 0..size {
        for x in 0..size {
            for ch in 0..c {
                px.push(img.get(x, y, ch));
            }
        }
    }
    ImageBuf::new(size, size, c, px).unwrap()
}

fn small_cfg() -> TrainConfig {
    TrainConfig {
        k: 4,
        n_levels: 2,
        hidden: 8,
        epochs: 4,
        batch: 512,
        ..TrainConfig::default()
    }
}

#[test]
fn trained_model_survives_disk_round_trip() {
    let before = window(&load_image(data("train/astronaut.png")).unwrap(), 64);
    let after = FilterSpec::preset("gaussian").unwrap().apply(&before).unwrap();
    let model = train(&before, &after, &small_cfg()).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.osr");
    save_model(&model, &path).unwrap();
    let loaded = load_model(&path).unwrap();
    assert_eq!(loaded, model);
    assert_eq!(
        apply_model(&loaded, &before).unwrap(),
        apply_model(&model, &before).unwrap()
    );
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(bytes.len(), 34 + 8 * small_cfg().param_count());
}

#[test]
fn short_training_moves_output_toward_target() {
    let before = window(&load_image(data("corpus/camera.png")).unwrap(), 96);
    let spec = FilterSpec::preset("gaussian").unwrap();
    let cfg = TrainConfig {
        epochs: 30,
        ..small_cfg()
    };
    let (model, log) = train_transfer(&before, &spec, &cfg).unwrap();
    for band in &log.bands {
        let first = band.epochs.first().unwrap().loss;
        assert!(band.final_loss < first, "band {}: {first} -> {}", band.band, band.final_loss);
    }
    let target = spec.apply(&before).unwrap().luma();
    let trained = psnr(&apply_model(&model, &before).unwrap().luma(), &target, 1.0).unwrap();
    let untouched = psnr(&before.luma(), &target, 1.0).unwrap();
    assert!(trained > untouched + 3.0, "{trained} vs {untouched}");

    let held_out = window(&load_image(data("corpus/coins.png")).unwrap(), 96);
    let report = score_transfer(&model, &spec, &[("coins".into(), held_out.clone())]).unwrap();
    let direct = apply_model(&model, &held_out).unwrap().luma();
    let reference = spec.apply(&held_out).unwrap().luma();
    assert_eq!(report.images[0].psnr_db, psnr(&direct, &reference, 1.0).unwrap());
    assert_eq!(report.images[0].ssim, ssim(&direct, &reference).unwrap());
}

#[test]
fn regressor_baseline_trains_and_serializes() {
    let before = window(&load_image(data("corpus/chelsea.png")).unwrap(), 48);
    let after = FilterSpec::preset("bilateral").unwrap().apply(&before).unwrap();
    let cfg = TrainConfig {
        map_kind: MapKind::Regressor,
        ..small_cfg()
    };
    let model = train(&before, &after, &cfg).unwrap();
    assert!(model.is_regressor());
    assert_eq!(model.param_count(), cfg.param_count());
    assert_eq!(decode_model(&encode_model(&model).unwrap()).unwrap(), model);
}

#[test]
fn per_channel_model_changes_chroma_and_luma_only_keeps_it() {
    let before = window(&load_image(data("corpus/coffee.png")).unwrap(), 48);
    let after = FilterSpec::preset("unsharp").unwrap().apply(&before).unwrap();
    let per = train(
        &before,
        &after,
        &TrainConfig {
            channel_mode: ChannelMode::PerChannel,
            ..small_cfg()
        },
    )
    .unwrap();
    assert_eq!(per.maps.len(), 3);
    let luma = train(&before, &after, &small_cfg()).unwrap();
    assert_eq!(luma.maps.len(), 1);
    let grey = before.luma().to_image();
    assert!(matches!(
        train(
            &grey,
            &grey,
            &TrainConfig {
                channel_mode: ChannelMode::PerChannel,
                ..small_cfg()
            }
        ),
        Err(Error::InvalidParameter(_)) | Err(Error::ChannelCount { .. })
    ));
}

#[test]
fn misaligned_and_undersized_inputs_are_rejected() {
    let img = load_image(data("corpus/camera.png")).unwrap();
    let small = window(&img, 64);
    assert!(matches!(
        train(&img, &small, &small_cfg()),
        Err(Error::Misaligned { .. })
    ));
    let tiny = window(&img, 4);
    let model = RetouchModel::identity(5, 3, 2, 4, ChannelMode::LumaOnly).unwrap();
    assert!(apply_model(&model, &tiny).is_err());
}

#[test]
fn corpus_images_round_trip_through_png() {
    let dir = tempfile::tempdir().unwrap();
    for entry in std::fs::read_dir(data("corpus")).unwrap() {
        let path = entry.unwrap().path();
        let img = load_image(&path).unwrap();
        assert_eq!((img.width(), img.height()), (256, 256));
        let out = dir.path().join("x.png");
        save_image(&img, &out).unwrap();
        assert_eq!(load_image(&out).unwrap(), img);
        let pyr = decompose(&img.luma(), 5).unwrap();
        let rec = reconstruct(&pyr).unwrap();
        assert!(psnr(&rec, &img.luma(), 1.0).unwrap() >= 40.0, "{}", path.display());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn identity_models_encode_losslessly(levels in 0usize..4, k in 1usize..5, hidden in 1usize..6, per in any::<bool>()) {
        let mode = if per { ChannelMode::PerChannel } else { ChannelMode::LumaOnly };
        let m = RetouchModel::identity(levels, 3, k, hidden, mode).unwrap();
        let bytes = encode_model(&m).unwrap();
        prop_assert_eq!(decode_model(&bytes).unwrap(), m);
    }

    #[test]
    fn truncation_anywhere_is_an_error(cut in 0usize..200) {
        let m = RetouchModel::identity(1, 3, 2, 2, ChannelMode::LumaOnly).unwrap();
        let bytes = encode_model(&m).unwrap();
        let cut = cut.min(bytes.len() - 1);
        prop_assert!(decode_model(&bytes[..cut]).is_err());
    }
}
