//! KITTI-convention rasters and directory layout.
//!
//! Disparity maps are 16-bit gray PNGs storing `d * 256` (0 marks a gap).
//! Flow maps are 16-bit RGB PNGs storing `u * 64 + 2^15`, `v * 64 + 2^15`
//! and a validity flag in the third channel.
//!
//! Input frames live under `image_2/` (left) and `image_3/` (right) as
//! `{id}_10.png` (time `t`) and `{id}_11.png` (time `t + 1`).

use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageBuffer, Luma, Rgb};

use crate::combine::{SceneFlowField, SceneFlowSample};
use crate::error::{check_extent, Error, Result};
use crate::eval::GroundTruth;
use crate::raster::{luma, Image, ScalarField, Vec2Field};

/// Left and right views at two consecutive time steps; `left_t` is the
/// reference frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameQuadruple {
    pub left_t: Image,
    pub right_t: Image,
    pub left_t1: Image,
    pub right_t1: Image,
}

impl FrameQuadruple {
    pub fn extent(&self) -> (usize, usize) {
        self.left_t.extent()
    }

    /// Errors unless all four views share one extent.
    pub fn check(&self) -> Result<()> {
        let e = self.extent();
        check_extent("right image at t", e, self.right_t.extent())?;
        check_extent("left image at t+1", e, self.left_t1.extent())?;
        check_extent("right image at t+1", e, self.right_t1.extent())
    }
}

const DISP_SCALE: f32 = 256.0;
const FLOW_SCALE: f32 = 64.0;
const FLOW_OFFSET: f32 = 32768.0;
/// Largest disparity (exclusive) the 16-bit encoding can hold.
pub const MAX_DISPARITY: f32 = 256.0;
/// Largest flow component magnitude (exclusive) the 16-bit encoding can hold.
pub const MAX_FLOW: f32 = 512.0;

fn open(path: &Path) -> Result<DynamicImage> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

fn create_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => {
            std::fs::create_dir_all(dir).map_err(|source| Error::Io {
                path: dir.to_path_buf(),
                source,
            })
        }
        _ => Ok(()),
    }
}

fn save<P, C>(buf: &ImageBuffer<P, C>, path: &Path) -> Result<()>
where
    P: image::PixelWithColorType,
    [P::Subpixel]: image::EncodableLayout,
    C: std::ops::Deref<Target = [P::Subpixel]>,
{
    create_parent(path)?;
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
}

fn format_error(path: &Path, want: &str, got: &DynamicImage) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        reason: format!("expected {want}, got {:?}", got.color()),
    }
}

pub fn read_disparity(path: impl AsRef<Path>) -> Result<ScalarField> {
    let path = path.as_ref();
    let img = match open(path)? {
        DynamicImage::ImageLuma16(b) => b,
        other => return Err(format_error(path, "16-bit single-channel PNG", &other)),
    };
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut field = ScalarField::invalid(w, h);
    for (i, &raw) in img.as_raw().iter().enumerate() {
        if raw != 0 {
            field.values[i] = raw as f32 / DISP_SCALE;
            field.valid[i] = true;
        }
    }
    Ok(field)
}

/// Encodes one valid disparity. Values that would round to the gap code 0
/// are stored as the smallest positive code so validity survives.
pub fn encode_disparity(d: f32) -> Result<u16> {
    if !(0.0..MAX_DISPARITY).contains(&d) {
        return Err(Error::EncodeOverflow {
            what: "disparity",
            value: d,
            limit: MAX_DISPARITY,
        });
    }
    Ok(((d * DISP_SCALE).round() as u16).max(1))
}

pub fn write_disparity(field: &ScalarField, path: impl AsRef<Path>) -> Result<()> {
    let raw = field
        .values
        .iter()
        .zip(&field.valid)
        .map(|(&d, &ok)| if ok { encode_disparity(d) } else { Ok(0) })
        .collect::<Result<Vec<u16>>>()?;
    let buf = ImageBuffer::<Luma<u16>, _>::from_raw(field.width as u32, field.height as u32, raw)
        .expect("buffer length matches extent");
    save(&buf, path.as_ref())
}

pub fn read_flow(path: impl AsRef<Path>) -> Result<Vec2Field> {
    let path = path.as_ref();
    let img = match open(path)? {
        DynamicImage::ImageRgb16(b) => b,
        other => return Err(format_error(path, "16-bit three-channel PNG", &other)),
    };
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut field = Vec2Field::invalid(w, h);
    for (i, px) in img.as_raw().chunks_exact(3).enumerate() {
        if px[2] != 0 {
            field.u[i] = (px[0] as f32 - FLOW_OFFSET) / FLOW_SCALE;
            field.v[i] = (px[1] as f32 - FLOW_OFFSET) / FLOW_SCALE;
            field.valid[i] = true;
        }
    }
    Ok(field)
}

fn encode_flow_component(c: f32) -> Result<u16> {
    if !(c.abs() < MAX_FLOW) {
        return Err(Error::EncodeOverflow {
            what: "flow component",
            value: c,
            limit: MAX_FLOW,
        });
    }
    Ok((c * FLOW_SCALE + FLOW_OFFSET).round().min(65535.0) as u16)
}

pub fn write_flow(field: &Vec2Field, path: impl AsRef<Path>) -> Result<()> {
    let mut raw = Vec::with_capacity(field.u.len() * 3);
    for i in 0..field.u.len() {
        if field.valid[i] {
            raw.extend([
                encode_flow_component(field.u[i])?,
                encode_flow_component(field.v[i])?,
                1,
            ]);
        } else {
            raw.extend([0, 0, 0]);
        }
    }
    let buf = ImageBuffer::<Rgb<u16>, _>::from_raw(field.width as u32, field.height as u32, raw)
        .expect("buffer length matches extent");
    save(&buf, path.as_ref())
}

/// Reads any raster the decoder supports as an 8-bit grayscale image.
pub fn read_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let img = open(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = match img {
        DynamicImage::ImageLuma8(b) => b.into_raw(),
        other => other
            .into_rgb8()
            .as_raw()
            .chunks_exact(3)
            .map(|p| luma(p[0], p[1], p[2]))
            .collect(),
    };
    Image::new(w, h, 1, data).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

/// Writes an 8-bit gray or RGB PNG.
pub fn write_image(image: &Image, path: impl AsRef<Path>) -> Result<()> {
    let (w, h) = (image.width() as u32, image.height() as u32);
    let data = image.data().to_vec();
    if image.is_gray() {
        save(
            &ImageBuffer::<Luma<u8>, _>::from_raw(w, h, data).expect("gray extent"),
            path.as_ref(),
        )
    } else {
        save(
            &ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, data).expect("rgb extent"),
            path.as_ref(),
        )
    }
}

/// Paths of the four input views of `frame_id`, in quadruple field order.
pub fn quadruple_paths(root: &Path, frame_id: &str) -> [PathBuf; 4] {
    let p = |cam: &str, t: &str| root.join(cam).join(format!("{frame_id}_{t}.png"));
    [
        p("image_2", "10"),
        p("image_3", "10"),
        p("image_2", "11"),
        p("image_3", "11"),
    ]
}

pub fn load_quadruple(root: impl AsRef<Path>, frame_id: &str) -> Result<FrameQuadruple> {
    let [lt, rt, lt1, rt1] = quadruple_paths(root.as_ref(), frame_id);
    let q = FrameQuadruple {
        left_t: read_image(lt)?,
        right_t: read_image(rt)?,
        left_t1: read_image(lt1)?,
        right_t1: read_image(rt1)?,
    };
    q.check()?;
    Ok(q)
}

/// Writes the four views of `q` under the input layout.
pub fn save_quadruple(q: &FrameQuadruple, root: impl AsRef<Path>, frame_id: &str) -> Result<()> {
    let paths = quadruple_paths(root.as_ref(), frame_id);
    for (img, p) in [&q.left_t, &q.right_t, &q.left_t1, &q.right_t1]
        .into_iter()
        .zip(paths)
    {
        write_image(img, p)?;
    }
    Ok(())
}

fn frame_file(root: &Path, dir: &str, frame_id: &str) -> PathBuf {
    root.join(dir).join(format!("{frame_id}_10.png"))
}

/// Loads the training ground truth of `frame_id`: `disp_occ_0`, `disp_occ_1`
/// and `flow_occ` hold all annotated pixels, and a pixel is non-occluded when
/// it is also annotated in each of `disp_noc_0`, `disp_noc_1` and `flow_noc`.
pub fn load_ground_truth(root: impl AsRef<Path>, frame_id: &str) -> Result<GroundTruth> {
    let root = root.as_ref();
    let disp0 = read_disparity(frame_file(root, "disp_occ_0", frame_id))?;
    let disp1 = read_disparity(frame_file(root, "disp_occ_1", frame_id))?;
    let flow = read_flow(frame_file(root, "flow_occ", frame_id))?;
    let noc0 = read_disparity(frame_file(root, "disp_noc_0", frame_id))?;
    let noc1 = read_disparity(frame_file(root, "disp_noc_1", frame_id))?;
    let nocf = read_flow(frame_file(root, "flow_noc", frame_id))?;
    let ext = disp0.extent();
    check_extent("non-occluded disparity at t", ext, noc0.extent())?;
    check_extent("non-occluded disparity at t+1", ext, noc1.extent())?;
    check_extent("non-occluded flow", ext, nocf.extent())?;
    let noc_mask = (0..noc0.valid.len())
        .map(|i| noc0.valid[i] && noc1.valid[i] && nocf.valid[i])
        .collect();
    GroundTruth::new(disp0, disp1, flow, noc_mask)
}

/// Writes the ground truth of `frame_id` in the training layout. The noc
/// rasters carry the occ values restricted to the noc mask.
pub fn save_ground_truth(gt: &GroundTruth, root: impl AsRef<Path>, frame_id: &str) -> Result<()> {
    let root = root.as_ref();
    let mask = |valid: &[bool]| -> Vec<bool> {
        valid
            .iter()
            .zip(&gt.noc_mask)
            .map(|(&v, &m)| v && m)
            .collect()
    };
    write_disparity(&gt.disp0, frame_file(root, "disp_occ_0", frame_id))?;
    write_disparity(&gt.disp1, frame_file(root, "disp_occ_1", frame_id))?;
    write_flow(&gt.flow, frame_file(root, "flow_occ", frame_id))?;
    let noc0 = ScalarField {
        valid: mask(&gt.disp0.valid),
        ..gt.disp0.clone()
    };
    let noc1 = ScalarField {
        valid: mask(&gt.disp1.valid),
        ..gt.disp1.clone()
    };
    let nocf = Vec2Field {
        valid: mask(&gt.flow.valid),
        ..gt.flow.clone()
    };
    write_disparity(&noc0, frame_file(root, "disp_noc_0", frame_id))?;
    write_disparity(&noc1, frame_file(root, "disp_noc_1", frame_id))?;
    write_flow(&nocf, frame_file(root, "flow_noc", frame_id))
}

/// The three rasters a scene flow result is stored as, in write order.
pub fn sceneflow_paths(root: &Path, frame_id: &str) -> [PathBuf; 3] {
    [
        frame_file(root, "disp_0", frame_id),
        frame_file(root, "disp_1", frame_id),
        frame_file(root, "flow", frame_id),
    ]
}

/// Stores a result as `disp_0/` (the disparity map at `t`), `disp_1/` (the
/// second disparity warped to frame `t`, valid exactly where `sf` is) and
/// `flow/`. `disp0` and `flow` must cover every valid pixel of `sf`, so the
/// intersection of the three rasters reproduces the validity of `sf`.
pub fn write_sceneflow(
    root: impl AsRef<Path>,
    frame_id: &str,
    sf: &SceneFlowField,
    disp0: &ScalarField,
    flow: &Vec2Field,
) -> Result<()> {
    check_extent("first disparity", sf.extent(), disp0.extent())?;
    check_extent("flow", sf.extent(), flow.extent())?;
    if let Some(i) =
        (0..sf.valid.len()).find(|&i| sf.valid[i] && !(disp0.valid[i] && flow.valid[i]))
    {
        return Err(Error::InvalidParam {
            name: "scene flow",
            reason: format!(
                "pixel ({}, {}) is valid but not covered by disparity and flow",
                i % sf.width,
                i / sf.width
            ),
        });
    }
    let [d0, d1, fl] = sceneflow_paths(root.as_ref(), frame_id);
    write_disparity(disp0, d0)?;
    write_disparity(&sf.disparity1(), d1)?;
    write_flow(flow, fl)
}

/// Reads a stored result; a pixel is valid where all three rasters are.
pub fn read_sceneflow(root: impl AsRef<Path>, frame_id: &str) -> Result<SceneFlowField> {
    let [p0, p1, pf] = sceneflow_paths(root.as_ref(), frame_id);
    let d0 = read_disparity(p0)?;
    let d1 = read_disparity(p1)?;
    let fl = read_flow(pf)?;
    check_extent("second disparity", d0.extent(), d1.extent())?;
    check_extent("flow", d0.extent(), fl.extent())?;
    let mut sf = SceneFlowField::invalid(d0.width, d0.height);
    for i in 0..d0.valid.len() {
        if d0.valid[i] && d1.valid[i] && fl.valid[i] {
            let s = SceneFlowSample {
                u: fl.u[i],
                v: fl.v[i],
                d0: d0.values[i],
                d1: d1.values[i],
            };
            sf.set(i % d0.width, i / d0.width, s);
        }
    }
    Ok(sf)
}
