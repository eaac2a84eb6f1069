//! The creative feature taxonomy and the graded dimensions the comparison
//! protocol inspects.
//!
//! Only part of the taxonomy is published as text: the five primary
//! categories, the Product Subject subcategories, and the Usage State values.
//! The remaining subcategories are stable placeholders derived from the
//! protocol question wording and carry `unverified_from_figure = true`.

use serde::{Deserialize, Serialize};
use std::sync::OnceLock;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subcategory {
    pub name: String,
    pub values: Vec<String>,
    pub unverified_from_figure: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureCategory {
    pub name: String,
    pub subcategories: Vec<Subcategory>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureTaxonomy {
    pub categories: Vec<FeatureCategory>,
}

pub const CATEGORY_NAMES: [&str; 5] = [
    "Product Subject",
    "Model&Props",
    "Background",
    "Layout",
    "Text in Image",
];

impl FeatureTaxonomy {
    pub fn category(&self, name: &str) -> Option<&FeatureCategory> {
        self.categories.iter().find(|c| c.name == name)
    }

    pub fn subcategory(&self, category: &str, name: &str) -> Option<&Subcategory> {
        self.category(category)?
            .subcategories
            .iter()
            .find(|s| s.name == name)
    }

    pub fn values(&self) -> impl Iterator<Item = &str> {
        self.categories
            .iter()
            .flat_map(|c| c.subcategories.iter())
            .flat_map(|s| s.values.iter().map(String::as_str))
    }

    pub fn contains_value(&self, tag: &str) -> bool {
        self.values().any(|v| v == tag)
    }

    /// Returns `(category, subcategory)` owning `tag`.
    pub fn locate(&self, tag: &str) -> Option<(&str, &str)> {
        self.categories.iter().find_map(|c| {
            c.subcategories
                .iter()
                .find(|s| s.values.iter().any(|v| v == tag))
                .map(|s| (c.name.as_str(), s.name.as_str()))
        })
    }
}

fn sub(name: &str, values: &[&str], unverified: bool) -> Subcategory {
    Subcategory {
        name: name.to_string(),
        values: values.iter().map(|v| v.to_string()).collect(),
        unverified_from_figure: unverified,
    }
}

fn build() -> FeatureTaxonomy {
    let cat = |name: &str, subcategories: Vec<Subcategory>| FeatureCategory {
        name: name.to_string(),
        subcategories,
    };
    FeatureTaxonomy {
        categories: vec![
            cat(
                "Product Subject",
                vec![
                    sub("Size", &["Moderate Size", "Oversized Subject", "Undersized Subject"], false),
                    sub("Shooting Angle", &["Suitable Angle", "Awkward Angle"], false),
                    sub("Position", &["Centered Position", "Off-center Position"], false),
                    sub(
                        "Quantity",
                        &["Multiple Types", "Multiple Colors", "Single Type", "Single Color"],
                        false,
                    ),
                    sub("Completeness", &["Complete Subject", "Partial Subject"], false),
                    sub(
                        "Usage State",
                        &[
                            "Product Tasting",
                            "Product Trying",
                            "Product Testing",
                            "Handheld Display",
                            "Static Display",
                        ],
                        false,
                    ),
                ],
            ),
            cat(
                "Model&Props",
                vec![
                    sub("Presence", &["No Model or Props", "Props Present", "Model Present"], true),
                    sub("Function Highlighting", &["Highlights Function", "Decorative Only"], true),
                ],
            ),
            cat(
                "Background",
                vec![
                    sub(
                        "Background Color",
                        &["High-end Tone", "Solid Color", "Low-key Color", "Bright Color"],
                        true,
                    ),
                    sub("Scene and Atmosphere", &["Consistent Scene", "Inconsistent Scene"], true),
                    sub("Background Image", &["Clean Background", "Cluttered Background"], true),
                ],
            ),
            cat(
                "Layout",
                vec![
                    sub(
                        "Composition",
                        &["Plain Layout", "Marketing Border", "Picture-in-Picture"],
                        true,
                    ),
                    sub("Inset Content", &["Detail Inset", "Freebie Overlay"], true),
                ],
            ),
            cat(
                "Text in Image",
                vec![
                    sub(
                        "Text Content",
                        &[
                            "No Text",
                            "Product Info Text",
                            "Selling Point Text",
                            "Pain Point Text",
                            "Call to Action Text",
                            "Scenario Text",
                        ],
                        true,
                    ),
                    sub(
                        "Query Keyword Coverage",
                        &["No Query Coverage", "Partial Query Coverage", "Full Query Coverage"],
                        true,
                    ),
                    sub(
                        "Title Keyword Coverage",
                        &["No Title Coverage", "Partial Title Coverage", "Full Title Coverage"],
                        true,
                    ),
                ],
            ),
        ],
    }
}

/// The static creative feature taxonomy.
pub fn taxonomy() -> &'static FeatureTaxonomy {
    static TAXONOMY: OnceLock<FeatureTaxonomy> = OnceLock::new();
    TAXONOMY.get_or_init(build)
}

/// One protocol question (Q3–Q9) graded on a three-level taxonomy scale.
/// `levels[0]` is the weakest attribute value, `levels[2]` the strongest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoredDimension {
    pub question: u8,
    pub name: &'static str,
    pub category: &'static str,
    pub subcategory: &'static str,
    pub levels: [&'static str; 3],
}

impl ScoredDimension {
    /// Level of the first descriptor tag on this dimension's scale.
    pub fn level_of<'a>(&self, descriptor: impl IntoIterator<Item = &'a String>) -> Option<u8> {
        descriptor
            .into_iter()
            .find_map(|tag| self.levels.iter().position(|l| l == tag))
            .map(|p| p as u8)
    }
}

pub const NUM_SCORED: usize = 7;

pub const SCORED_DIMENSIONS: [ScoredDimension; NUM_SCORED] = [
    ScoredDimension {
        question: 3,
        name: "Query Hit Rate",
        category: "Text in Image",
        subcategory: "Query Keyword Coverage",
        levels: ["No Query Coverage", "Partial Query Coverage", "Full Query Coverage"],
    },
    ScoredDimension {
        question: 4,
        name: "Title Hit Rate",
        category: "Text in Image",
        subcategory: "Title Keyword Coverage",
        levels: ["No Title Coverage", "Partial Title Coverage", "Full Title Coverage"],
    },
    ScoredDimension {
        question: 5,
        name: "Text in Image",
        category: "Text in Image",
        subcategory: "Text Content",
        levels: ["No Text", "Product Info Text", "Selling Point Text"],
    },
    ScoredDimension {
        question: 6,
        name: "Models and Props",
        category: "Model&Props",
        subcategory: "Presence",
        levels: ["No Model or Props", "Props Present", "Model Present"],
    },
    ScoredDimension {
        question: 7,
        name: "Layout",
        category: "Layout",
        subcategory: "Composition",
        levels: ["Plain Layout", "Marketing Border", "Picture-in-Picture"],
    },
    ScoredDimension {
        question: 8,
        name: "Product Subject",
        category: "Product Subject",
        subcategory: "Usage State",
        levels: ["Static Display", "Handheld Display", "Product Trying"],
    },
    ScoredDimension {
        question: 9,
        name: "Background Design",
        category: "Background",
        subcategory: "Background Color",
        levels: ["Bright Color", "Solid Color", "High-end Tone"],
    },
];

pub fn scored_dimension(question: u8) -> Option<&'static ScoredDimension> {
    SCORED_DIMENSIONS.iter().find(|d| d.question == question)
}
