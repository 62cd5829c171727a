use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub const NUM_CATEGORIES: usize = 23;

/// The 23 material categories, in id order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum Category {
    Brick,
    Carpet,
    Ceramic,
    Fabric,
    Foliage,
    Food,
    Glass,
    Hair,
    Leather,
    Metal,
    Mirror,
    Other,
    Painted,
    Paper,
    Plastic,
    PolishedStone,
    Skin,
    Sky,
    Stone,
    Tile,
    Wallpaper,
    Water,
    Wood,
}

impl Category {
    pub const ALL: [Category; NUM_CATEGORIES] = [
        Category::Brick,
        Category::Carpet,
        Category::Ceramic,
        Category::Fabric,
        Category::Foliage,
        Category::Food,
        Category::Glass,
        Category::Hair,
        Category::Leather,
        Category::Metal,
        Category::Mirror,
        Category::Other,
        Category::Painted,
        Category::Paper,
        Category::Plastic,
        Category::PolishedStone,
        Category::Skin,
        Category::Sky,
        Category::Stone,
        Category::Tile,
        Category::Wallpaper,
        Category::Water,
        Category::Wood,
    ];

    pub fn id(self) -> usize {
        self as usize
    }

    pub fn from_id(id: usize) -> Result<Self> {
        Category::ALL
            .get(id)
            .copied()
            .ok_or_else(|| Error::invalid(format!("category id {id} out of range")))
    }

    /// Display name, e.g. `"polished stone"`.
    pub fn name(self) -> &'static str {
        match self {
            Category::Brick => "brick",
            Category::Carpet => "carpet",
            Category::Ceramic => "ceramic",
            Category::Fabric => "fabric",
            Category::Foliage => "foliage",
            Category::Food => "food",
            Category::Glass => "glass",
            Category::Hair => "hair",
            Category::Leather => "leather",
            Category::Metal => "metal",
            Category::Mirror => "mirror",
            Category::Other => "other",
            Category::Painted => "painted",
            Category::Paper => "paper",
            Category::Plastic => "plastic",
            Category::PolishedStone => "polished stone",
            Category::Skin => "skin",
            Category::Sky => "sky",
            Category::Stone => "stone",
            Category::Tile => "tile",
            Category::Wallpaper => "wallpaper",
            Category::Water => "water",
            Category::Wood => "wood",
        }
    }

    pub fn names() -> Vec<String> {
        Category::ALL.iter().map(|c| c.name().to_string()).collect()
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Category {
    type Err = Error;

    /// Accepts display names, snake_case names, or numeric ids.
    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('_', " ");
        if let Some(c) = Category::ALL.iter().find(|c| c.name() == norm) {
            return Ok(*c);
        }
        if let Ok(id) = norm.parse::<usize>() {
            return Category::from_id(id);
        }
        Err(Error::invalid(format!("unknown category {s:?}")))
    }
}

impl Serialize for Category {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.name().replace(' ', "_"))
    }
}

impl<'de> Deserialize<'de> for Category {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
