use crate::image::{Image, Rgb};

/// Maps arena coordinates (`[-extent, extent]²`, y up) to pixel centres.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Viewport {
    pub extent: f64,
    pub height: usize,
    pub width: usize,
}

impl Viewport {
    pub fn px_per_unit_x(&self) -> f64 {
        self.width as f64 / (2.0 * self.extent)
    }

    pub fn px_per_unit_y(&self) -> f64 {
        self.height as f64 / (2.0 * self.extent)
    }

    /// World position of the centre of pixel `(row, col)`.
    pub fn pixel_center(&self, row: usize, col: usize) -> [f64; 2] {
        [
            -self.extent + (col as f64 + 0.5) / self.px_per_unit_x(),
            self.extent - (row as f64 + 0.5) / self.px_per_unit_y(),
        ]
    }

    /// Fills every pixel whose centre satisfies `inside`, scanning only the
    /// bounding box `[lo, hi]`.
    fn fill(&self, img: &mut Image, lo: [f64; 2], hi: [f64; 2], color: Rgb, inside: impl Fn([f64; 2]) -> bool) {
        let col_of = |x: f64| ((x + self.extent) * self.px_per_unit_x()).floor();
        let row_of = |y: f64| ((self.extent - y) * self.px_per_unit_y()).floor();
        let c0 = col_of(lo[0]).max(0.0) as usize;
        let c1 = (col_of(hi[0]).min(self.width as f64 - 1.0)).max(0.0) as usize;
        let r0 = row_of(hi[1]).max(0.0) as usize;
        let r1 = (row_of(lo[1]).min(self.height as f64 - 1.0)).max(0.0) as usize;
        for row in r0..=r1 {
            for col in c0..=c1 {
                if inside(self.pixel_center(row, col)) {
                    img.set_rgb(row, col, color);
                }
            }
        }
    }

    pub fn fill_rect(&self, img: &mut Image, center: [f64; 2], half: [f64; 2], color: Rgb) {
        let lo = [center[0] - half[0], center[1] - half[1]];
        let hi = [center[0] + half[0], center[1] + half[1]];
        self.fill(img, lo, hi, color, |p| {
            (p[0] - center[0]).abs() <= half[0] && (p[1] - center[1]).abs() <= half[1]
        });
    }

    pub fn fill_disc(&self, img: &mut Image, center: [f64; 2], radius: f64, color: Rgb) {
        let lo = [center[0] - radius, center[1] - radius];
        let hi = [center[0] + radius, center[1] + radius];
        let r2 = radius * radius;
        self.fill(img, lo, hi, color, |p| {
            let (dx, dy) = (p[0] - center[0], p[1] - center[1]);
            dx * dx + dy * dy <= r2
        });
    }
}
