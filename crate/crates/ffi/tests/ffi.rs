use std::ffi::CString;
use std::ptr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rti_core::neural::{architecture, FourierMatrix, MlpWeights};
use rti_core::pca::KGrid;
use rti_core::relight::RelightModel;
use rti_core::{ImagePlane, LightDirection};
use rti_ffi::*;

fn sample_model(w: usize, h: usize) -> RelightModel {
    let (b, hf) = (4, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mlp = MlpWeights::<f32>::glorot(&architecture(b + 2 * hf), &mut rng).unwrap();
    let coeffs = (0..w * h * b).map(|i| ((i * 37 % 101) as f32 / 50.0) - 1.0).collect();
    RelightModel::new(
        FourierMatrix::sample(hf, 0.3, 1).unwrap(),
        mlp,
        KGrid::new(w, h, b, coeffs).unwrap(),
        ImagePlane::from_fn(w, h, |x, _| 0.45 + 0.01 * x as f32),
        ImagePlane::filled(w, h, 0.55),
    )
    .unwrap()
}

fn last_error() -> String {
    let n = unsafe { rti_last_error_message(ptr::null_mut(), 0) };
    let mut buf = vec![0u8; n];
    unsafe { rti_last_error_message(buf.as_mut_ptr().cast(), n) };
    String::from_utf8(buf[..n - 1].to_vec()).unwrap()
}

fn load(model: &RelightModel) -> *mut RtiModel {
    let bytes = model.to_bytes();
    let mut handle = ptr::null_mut();
    let s = unsafe { rti_model_from_bytes(bytes.as_ptr(), bytes.len(), &mut handle) };
    assert_eq!(s, RtiStatus::Ok);
    handle
}

#[test]
fn file_load_and_dims() {
    let model = sample_model(7, 5);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.rtim");
    model.save(&path).unwrap();
    let c = CString::new(path.to_str().unwrap()).unwrap();
    let mut handle = ptr::null_mut();
    assert_eq!(unsafe { rti_model_load(c.as_ptr(), &mut handle) }, RtiStatus::Ok);
    let (mut w, mut h, mut b, mut hf) = (0, 0, 0, 0);
    assert_eq!(unsafe { rti_model_dims(handle, &mut w, &mut h, &mut b, &mut hf) }, RtiStatus::Ok);
    assert_eq!((w, h, b, hf), (7, 5, 4, 3));
    assert_eq!(unsafe { rti_model_dims(handle, ptr::null_mut(), &mut h, ptr::null_mut(), ptr::null_mut()) }, RtiStatus::Ok);
    unsafe { rti_model_free(handle) };
}

#[test]
fn relight_matches_library_renderer() {
    let model = sample_model(9, 6);
    let handle = load(&model);
    for (lu, lv) in [(0.0, 0.0), (0.3, -0.2), (-0.7, 0.5)] {
        let mut buf = vec![0u8; 9 * 6 * 3];
        assert_eq!(unsafe { rti_model_relight(handle, lu, lv, buf.as_mut_ptr(), buf.len()) }, RtiStatus::Ok);
        let l = LightDirection::from_uv(lu, lv).unwrap();
        assert_eq!(buf, model.relight_image(&l).data());
        let mut px = [0f32; 3];
        assert_eq!(unsafe { rti_model_relight_pixel(handle, 4, 2, lu, lv, px.as_mut_ptr()) }, RtiStatus::Ok);
        assert_eq!(px, model.relight_pixel(4, 2, &l).unwrap());
    }
    unsafe { rti_model_free(handle) };
}

#[test]
fn errors_carry_codes_and_messages() {
    let model = sample_model(4, 4);
    let handle = load(&model);
    let mut buf = vec![0u8; 47];
    assert_eq!(unsafe { rti_model_relight(handle, 0.0, 0.0, buf.as_mut_ptr(), buf.len()) }, RtiStatus::BufferTooSmall);
    assert!(last_error().contains("48"));
    buf.resize(48, 0);
    assert_eq!(unsafe { rti_model_relight(handle, 0.9, 0.9, buf.as_mut_ptr(), buf.len()) }, RtiStatus::InvalidArgument);
    let mut px = [0f32; 3];
    assert_eq!(unsafe { rti_model_relight_pixel(handle, 4, 0, 0.0, 0.0, px.as_mut_ptr()) }, RtiStatus::InvalidArgument);
    assert_eq!(unsafe { rti_model_relight(ptr::null(), 0.0, 0.0, buf.as_mut_ptr(), buf.len()) }, RtiStatus::NullPointer);
    unsafe { rti_model_free(handle) };
    unsafe { rti_model_free(ptr::null_mut()) };

    let mut bytes = model.to_bytes();
    bytes[0] = b'X';
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { rti_model_from_bytes(bytes.as_ptr(), bytes.len(), &mut out) }, RtiStatus::Format);
    assert!(out.is_null());
    assert!(last_error().contains("byte 0"), "{}", last_error());

    let missing = CString::new("/nonexistent/model.rtim").unwrap();
    assert_eq!(unsafe { rti_model_load(missing.as_ptr(), &mut out) }, RtiStatus::Io);
}

#[test]
fn truncated_messages_stay_terminated() {
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { rti_model_from_bytes([0u8; 3].as_ptr(), 3, &mut out) }, RtiStatus::Format);
    let full = last_error();
    let mut small = [0x7fu8; 5];
    let n = unsafe { rti_last_error_message(small.as_mut_ptr().cast(), small.len()) };
    assert_eq!(n, full.len() + 1);
    assert_eq!(&small[..4], &full.as_bytes()[..4]);
    assert_eq!(small[4], 0);
}

#[test]
fn header_declares_the_interface() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/rti.h")).unwrap();
    for name in [
        "rti_model_load",
        "rti_model_from_bytes",
        "rti_model_free",
        "rti_model_dims",
        "rti_model_relight",
        "rti_model_relight_pixel",
        "rti_last_error_message",
        "rti_format_version",
        "typedef struct RtiModel RtiModel",
        "RTI_STATUS_BUFFER_TOO_SMALL",
    ] {
        assert!(header.contains(name), "missing {name}");
    }
    assert_eq!(rti_format_version(), 1);
}

#[test]
fn header_compiles_as_c_and_cpp() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"rti.h\"\nint probe(void) {\n  RtiModel *m = 0;\n  RtiStatus s = rti_model_from_bytes((const uint8_t *)\"\", 0, &m);\n  rti_model_free(m);\n  return s == RTI_STATUS_OK;\n}\n",
    )
    .unwrap();
    let include = concat!(env!("CARGO_MANIFEST_DIR"), "/include");
    for (compiler, lang) in [("cc", "c"), ("c++", "c++")] {
        let status = std::process::Command::new(compiler)
            .args(["-fsyntax-only", "-Wall", "-Werror", "-x", lang, "-I", include])
            .arg(&src)
            .status()
            .unwrap_or_else(|e| panic!("{compiler} not runnable: {e}"));
        assert!(status.success(), "{compiler} rejected the header");
    }
}
