//! Grayscale rasters and the handful of filters the rest of the crate needs:
//! separable Gaussian blur, the 4-neighbour Laplacian, variance of Laplacian,
//! center crop and bilinear resize, plus 8-bit PNG I/O.
//!
//! Every filter uses edge replication at the borders. Every operation that
//! produces an [`Image`] clamps its output to `[0, 1]`.

use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, GrayImage, ImageFormat, Luma};

use crate::error::{Error, Result};

/// Row-major grayscale raster with luminance in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Image {
    /// Builds an image from raw luminance values, clamping each into `[0, 1]`.
    pub fn new(width: usize, height: usize, mut data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::invalid(format!(
                "image data length {} does not match {width}x{height}",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite pixel at index {i}")));
        }
        for v in &mut data {
            *v = v.clamp(0.0, 1.0);
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    // Internal constructor for filter outputs that are known to be finite.
    fn from_filtered(width: usize, height: usize, mut data: Vec<f64>) -> Self {
        for v in &mut data {
            *v = v.clamp(0.0, 1.0);
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    /// Pixel lookup with edge replication for out-of-range coordinates.
    #[inline]
    fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.data[y * self.width + x]
    }
}

/// Unclamped scalar field, e.g. a Laplacian response.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Field {
    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }
}

/// Symmetric, normalized 1-D convolution kernel of length `2 * radius + 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel1D {
    radius: usize,
    weights: Vec<f64>,
}

impl Kernel1D {
    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// Sampled Gaussian with support `ceil(3 sigma)`; `sigma < 0.3` gives the identity kernel.
pub fn gaussian_kernel(sigma: f64) -> Result<Kernel1D> {
    if !sigma.is_finite() || sigma < 0.0 {
        return Err(Error::invalid(format!(
            "gaussian sigma must be finite and non-negative, got {sigma}"
        )));
    }
    if sigma < 0.3 {
        return Ok(Kernel1D {
            radius: 0,
            weights: vec![1.0],
        });
    }
    let radius = (3.0 * sigma).ceil() as usize;
    let two_var = 2.0 * sigma * sigma;
    let mut weights: Vec<f64> = (0..=2 * radius)
        .map(|k| {
            let i = k as f64 - radius as f64;
            (-i * i / two_var).exp()
        })
        .collect();
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    Ok(Kernel1D { radius, weights })
}

/// Separable Gaussian blur, horizontal pass then vertical pass.
pub fn gaussian_blur(img: &Image, sigma: f64) -> Result<Image> {
    let kernel = gaussian_kernel(sigma)?;
    if kernel.radius == 0 {
        return Ok(img.clone());
    }
    let (w, h) = (img.width, img.height);
    let r = kernel.radius as isize;
    let weights = &kernel.weights;

    let mut horizontal = vec![0.0; w * h];
    for y in 0..h {
        let row = &img.data[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0.0;
            for (k, wt) in weights.iter().enumerate() {
                let sx = (x as isize + k as isize - r).clamp(0, w as isize - 1) as usize;
                acc += wt * row[sx];
            }
            horizontal[y * w + x] = acc;
        }
    }

    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for (k, wt) in weights.iter().enumerate() {
            let sy = (y as isize + k as isize - r).clamp(0, h as isize - 1) as usize;
            let src = &horizontal[sy * w..(sy + 1) * w];
            let dst = &mut out[y * w..(y + 1) * w];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += wt * s;
            }
        }
    }
    Ok(Image::from_filtered(w, h, out))
}

/// 4-neighbour Laplacian `[0,1,0; 1,-4,1; 0,1,0]` with replicated borders.
pub fn laplacian(img: &Image) -> Result<Field> {
    if img.width < 3 || img.height < 3 {
        return Err(Error::invalid(format!(
            "laplacian needs at least 3x3 pixels, got {}x{}",
            img.width, img.height
        )));
    }
    let (w, h) = (img.width, img.height);
    let mut data = Vec::with_capacity(w * h);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let c = img.get_clamped(x, y);
            let sum = img.get_clamped(x - 1, y)
                + img.get_clamped(x + 1, y)
                + img.get_clamped(x, y - 1)
                + img.get_clamped(x, y + 1);
            data.push(sum - 4.0 * c);
        }
    }
    Ok(Field {
        width: w,
        height: h,
        data,
    })
}

/// Population variance of the Laplacian response. Higher means sharper.
pub fn laplacian_variance(img: &Image) -> Result<f64> {
    let field = laplacian(img)?;
    Ok(population_variance(&field.data))
}

pub(crate) fn population_variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

/// Crops a `width x height` window from the center; odd remainders round the offset down.
pub fn center_crop(img: &Image, width: usize, height: usize) -> Result<Image> {
    if width == 0 || height == 0 {
        return Err(Error::invalid("crop dimensions must be positive"));
    }
    if width > img.width || height > img.height {
        return Err(Error::invalid(format!(
            "crop {width}x{height} exceeds source {}x{}",
            img.width, img.height
        )));
    }
    let x0 = (img.width - width) / 2;
    let y0 = (img.height - height) / 2;
    let mut data = Vec::with_capacity(width * height);
    for y in y0..y0 + height {
        data.extend_from_slice(&img.data[y * img.width + x0..y * img.width + x0 + width]);
    }
    Ok(Image::from_filtered(width, height, data))
}

/// Bilinear resize with corner-aligned sampling: output corners land exactly on input corners.
pub fn resize_bilinear(img: &Image, width: usize, height: usize) -> Result<Image> {
    if width == 0 || height == 0 {
        return Err(Error::invalid("resize dimensions must be positive"));
    }
    if width == img.width && height == img.height {
        return Ok(img.clone());
    }
    let map = |dst: usize, dst_len: usize, src_len: usize| -> f64 {
        if dst_len == 1 {
            (src_len - 1) as f64 / 2.0
        } else {
            dst as f64 * (src_len - 1) as f64 / (dst_len - 1) as f64
        }
    };
    let mut data = Vec::with_capacity(width * height);
    for y in 0..height {
        let sy = map(y, height, img.height);
        let y0 = sy.floor() as usize;
        let y1 = (y0 + 1).min(img.height - 1);
        let fy = sy - y0 as f64;
        for x in 0..width {
            let sx = map(x, width, img.width);
            let x0 = sx.floor() as usize;
            let x1 = (x0 + 1).min(img.width - 1);
            let fx = sx - x0 as f64;
            let top = img.get(x0, y0) * (1.0 - fx) + img.get(x1, y0) * fx;
            let bottom = img.get(x0, y1) * (1.0 - fx) + img.get(x1, y1) * fx;
            data.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    Ok(Image::from_filtered(width, height, data))
}

/// Center-crops to a square and resizes to `size x size`, the standard input path for scoring.
pub fn prepare_input(img: &Image, width: usize, height: usize) -> Result<Image> {
    if img.width == width && img.height == height {
        return Ok(img.clone());
    }
    let side = img.width.min(img.height);
    let cropped = center_crop(img, side, side)?;
    resize_bilinear(&cropped, width, height)
}

/// Encodes as an 8-bit grayscale PNG; values are mapped linearly with rounding.
pub fn encode_png(img: &Image) -> Result<Vec<u8>> {
    let buf = GrayImage::from_fn(img.width as u32, img.height as u32, |x, y| {
        Luma([to_u8(img.get(x as usize, y as usize))])
    });
    let mut out = Cursor::new(Vec::new());
    buf.write_to(&mut out, ImageFormat::Png)
        .map_err(|e| Error::Image {
            path: "<memory>".into(),
            message: e.to_string(),
        })?;
    Ok(out.into_inner())
}

/// Decodes any supported raster. Color input is converted with Rec. 601 luma weights.
pub fn decode_image(bytes: &[u8]) -> Result<Image> {
    let decoded = image::load_from_memory(bytes).map_err(|e| Error::Image {
        path: "<memory>".into(),
        message: e.to_string(),
    })?;
    Ok(from_dynamic(decoded))
}

pub fn read_image(path: &Path) -> Result<Image> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_image(&bytes).map_err(|e| match e {
        Error::Image { message, .. } => Error::Image {
            path: path.to_path_buf(),
            message,
        },
        other => other,
    })
}

pub fn write_png(img: &Image, path: &Path) -> Result<()> {
    let bytes = encode_png(img)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

fn from_dynamic(decoded: DynamicImage) -> Image {
    let (w, h) = (decoded.width() as usize, decoded.height() as usize);
    let data: Vec<f64> = match decoded {
        DynamicImage::ImageLuma8(g) => g.into_raw().into_iter().map(|v| v as f64 / 255.0).collect(),
        DynamicImage::ImageLuma16(g) => g
            .into_raw()
            .into_iter()
            .map(|v| v as f64 / 65535.0)
            .collect(),
        other => other
            .to_rgb8()
            .pixels()
            .map(|p| (0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64) / 255.0)
            .collect(),
    };
    Image::from_filtered(w, h, data)
}
