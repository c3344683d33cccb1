use std::fmt;

use serde::{Deserialize, Serialize};

use crate::image::Image;
use crate::instructions::BBox;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Square,
    Circle,
    Triangle,
}

impl Shape {
    pub const ALL: [Shape; 3] = [Shape::Square, Shape::Circle, Shape::Triangle];

    pub fn name(self) -> &'static str {
        match self {
            Shape::Square => "square",
            Shape::Circle => "circle",
            Shape::Triangle => "triangle",
        }
    }

    /// Accepts the singular or plural noun.
    pub fn from_word(word: &str) -> Option<Shape> {
        let w = word.strip_suffix('s').unwrap_or(word);
        Shape::ALL.into_iter().find(|s| s.name() == w)
    }

    /// Whether the normalized offset `(u, v) ∈ [0,1)²` within the bounding
    /// box is covered by the shape.
    pub fn covers(self, u: f64, v: f64) -> bool {
        match self {
            Shape::Square => true,
            Shape::Circle => {
                let (dx, dy) = (2.0 * u - 1.0, 2.0 * v - 1.0);
                dx * dx + dy * dy <= 1.0
            }
            // apex at top centre, base along the bottom edge
            Shape::Triangle => (u - 0.5).abs() <= 0.5 * v + 1e-9,
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The eight object colours.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Color {
    Red,
    Green,
    Blue,
    Yellow,
    Cyan,
    Magenta,
    Orange,
    Purple,
}

impl Color {
    pub const ALL: [Color; 8] = [
        Color::Red,
        Color::Green,
        Color::Blue,
        Color::Yellow,
        Color::Cyan,
        Color::Magenta,
        Color::Orange,
        Color::Purple,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Color::Red => "red",
            Color::Green => "green",
            Color::Blue => "blue",
            Color::Yellow => "yellow",
            Color::Cyan => "cyan",
            Color::Magenta => "magenta",
            Color::Orange => "orange",
            Color::Purple => "purple",
        }
    }

    pub fn from_word(word: &str) -> Option<Color> {
        Color::ALL.into_iter().find(|c| c.name() == word)
    }

    pub fn bytes(self) -> [u8; 3] {
        match self {
            Color::Red => [230, 25, 25],
            Color::Green => [25, 200, 50],
            Color::Blue => [30, 60, 230],
            Color::Yellow => [240, 230, 30],
            Color::Cyan => [30, 220, 230],
            Color::Magenta => [220, 40, 200],
            Color::Orange => [250, 140, 20],
            Color::Purple => [120, 40, 170],
        }
    }

    pub fn rgb(self) -> [f64; 3] {
        bytes_to_rgb(self.bytes())
    }
}

impl fmt::Display for Color {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Background {
    Black,
    Gray,
    White,
}

impl Background {
    pub const ALL: [Background; 3] = [Background::Black, Background::Gray, Background::White];

    pub fn rgb(self) -> [f64; 3] {
        match self {
            Background::Black => bytes_to_rgb([20, 20, 20]),
            Background::Gray => bytes_to_rgb([128, 128, 128]),
            Background::White => bytes_to_rgb([235, 235, 235]),
        }
    }
}

fn bytes_to_rgb(b: [u8; 3]) -> [f64; 3] {
    [f64::from(b[0]) / 255.0, f64::from(b[1]) / 255.0, f64::from(b[2]) / 255.0]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub shape: Shape,
    pub color: Color,
    pub bbox: BBox,
}

impl SceneObject {
    pub fn describe(&self) -> String {
        format!("{} {}", self.color, self.shape)
    }
}

/// Upper bound on objects per scene.
pub const MAX_OBJECTS: usize = 6;

/// A procedural image: flat background plus non-overlapping shapes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub height: usize,
    pub width: usize,
    pub background: Background,
    pub objects: Vec<SceneObject>,
}

impl Scene {
    pub fn new(height: usize, width: usize, background: Background) -> Self {
        Self { height, width, background, objects: Vec::new() }
    }

    pub fn render(&self) -> Image {
        let mut img = Image::filled(self.height, self.width, self.background.rgb());
        for obj in &self.objects {
            paint(&mut img, obj);
        }
        img
    }

    /// Objects whose shape matches and, when given, whose colour matches.
    pub fn find(&self, shape: Option<Shape>, color: Option<Color>) -> impl Iterator<Item = (usize, &SceneObject)> {
        self.objects
            .iter()
            .enumerate()
            .filter(move |(_, o)| shape.is_none_or(|s| o.shape == s) && color.is_none_or(|c| o.color == c))
    }

    pub fn is_free(&self, bbox: &BBox) -> bool {
        self.objects.iter().all(|o| !o.bbox.overlaps(bbox))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serialization is infallible")
    }
}

fn paint(img: &mut Image, obj: &SceneObject) {
    let (h, w) = img.resolution();
    let b = obj.bbox;
    let rgb = obj.color.rgb();
    for r in 0..h {
        let y = (r as f64 + 0.5) / h as f64;
        for c in 0..w {
            let x = (c as f64 + 0.5) / w as f64;
            if b.contains(x, y) {
                let u = (x - b.x0()) / b.width();
                let v = (y - b.y0()) / b.height();
                if obj.shape.covers(u, v) {
                    img.set_pixel(r, c, rgb);
                }
            }
        }
    }
}
