//! Category catalog: canonical target names, their anatomy group, and
//! whether the target comes in left/right parts.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AnatomyGroup {
    #[serde(rename = "Head&Neck")]
    HeadNeck,
    Thorax,
    Skeleton,
    Abdomen,
    Pelvis,
    Lesions,
}

impl AnatomyGroup {
    pub const ALL: [AnatomyGroup; 6] = [
        AnatomyGroup::HeadNeck,
        AnatomyGroup::Thorax,
        AnatomyGroup::Skeleton,
        AnatomyGroup::Abdomen,
        AnatomyGroup::Pelvis,
        AnatomyGroup::Lesions,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AnatomyGroup::HeadNeck => "Head&Neck",
            AnatomyGroup::Thorax => "Thorax",
            AnatomyGroup::Skeleton => "Skeleton",
            AnatomyGroup::Abdomen => "Abdomen",
            AnatomyGroup::Pelvis => "Pelvis",
            AnatomyGroup::Lesions => "Lesions",
        }
    }

    fn from_code(code: &str) -> AnatomyGroup {
        match code.as_bytes()[0] {
            b'A' => AnatomyGroup::Abdomen,
            b'H' => AnatomyGroup::HeadNeck,
            b'S' => AnatomyGroup::Skeleton,
            b'T' => AnatomyGroup::Thorax,
            b'P' => AnatomyGroup::Pelvis,
            _ => AnatomyGroup::Lesions,
        }
    }
}

impl fmt::Display for AnatomyGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AnatomyGroup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        AnatomyGroup::ALL
            .into_iter()
            .find(|g| g.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown anatomy group {s:?}")))
    }
}

/// One catalog row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Target {
    pub code: &'static str,
    /// Canonical (lowercase) name.
    pub name: &'static str,
    /// Has left and right parts that are merged under one name.
    pub paired: bool,
}

impl Target {
    pub fn group(&self) -> AnatomyGroup {
        AnatomyGroup::from_code(self.code)
    }
}

const fn t(code: &'static str, name: &'static str, paired: bool) -> Target {
    Target { code, name, paired }
}

pub const CATALOG: &[Target] = &[
    t("A01", "adrenal gland", true),
    t("A02", "aorta", false),
    t("A03", "autochthonous muscles", true),
    t("A04", "colon", false),
    t("A05", "duodenum", false),
    t("A06", "gallbladder", false),
    t("A07", "iliac artery", true),
    t("A08", "iliac vein", true),
    t("A09", "iliopsoas", true),
    t("A10", "inferior vena cava", false),
    t("A11", "kidney", true),
    t("A12", "liver", false),
    t("A13", "pancreas", false),
    t("A14", "portal and splenic veins", false),
    t("A15", "small intestine", false),
    t("A16", "spleen", false),
    t("A17", "stomach", false),
    t("A18", "spinal cord", false),
    t("A19", "rectum", false),
    t("A20", "portal veins", false),
    t("A21", "large bowel", false),
    t("H01", "brain", false),
    t("H02", "face", false),
    t("H03", "airway", false),
    t("H04", "eye", true),
    t("H05", "crystalline lens", true),
    t("H06", "optic nerve", true),
    t("H07", "optic chiasm", false),
    t("H08", "pituitary gland", false),
    t("H09", "brain stem", false),
    t("H10", "temporal lobe", true),
    t("H11", "parotid gland", true),
    t("H12", "ear", true),
    t("H13", "temporomandibular", true),
    t("H14", "mandible", true),
    t("H15", "thyroid gland", false),
    t("H16", "submandibular gland", true),
    t("H17", "oral cavity", false),
    t("H18", "eustachian tube", true),
    t("H19", "hippocampus", true),
    t("H20", "mastoid", true),
    t("H21", "tympanic cavity", true),
    t("H22", "semicircular canal", true),
    t("H23", "optic cup", false),
    t("H24", "optic disc", false),
    t("H25", "larynx glottis", false),
    t("H26", "larynx", false),
    t("H27", "pharyngeal constrictor", false),
    t("S01", "clavicle", true),
    t("S02", "femur", true),
    t("S03", "hip", true),
    t("S04", "humerus", true),
    t("S05", "rib", true),
    t("S06", "sacrum", false),
    t("S07", "scapula", true),
    t("S08", "cervical spine", false),
    t("S09", "lumbar spine", false),
    t("S10", "thoracic spine", false),
    t("T01", "esophagus", false),
    t("T02", "atrium", true),
    t("T03", "myocardium", true),
    t("T04", "ventricle", true),
    t("T05", "lower lobe", true),
    t("T06", "middle lobe", true),
    t("T07", "upper lobe", true),
    t("T08", "pulmonary artery", false),
    t("T09", "trachea", false),
    t("T10", "lung", false),
    t("T11", "heart", false),
    t("T12", "bronchus", true),
    t("T13", "breast", true),
    t("T14", "ascending aorta", false),
    t("P01", "gluteus maximus", true),
    t("P02", "gluteus medius", true),
    t("P03", "gluteus minimus", true),
    t("P04", "bladder", false),
    t("P05", "prostate and uterus", false),
    t("P06", "prostate", false),
    t("P07", "testicle", false),
    t("P08", "prostate peripheral zone", false),
    t("P09", "prostate transition zone", false),
    t("P10", "prostatic urethra", false),
    t("L01", "lung infections", false),
    t("L02", "liver tumor", false),
    t("L03", "kidney tumor", false),
    t("L04", "kidney cyst", false),
    t("L05", "pleural effusion", false),
    t("L06", "myocardial edema", false),
    t("L07", "myocardial scars", false),
    t("L08", "necrosis", false),
    t("L09", "edema", false),
    t("L10", "non enhancing tumor", false),
    t("L11", "enhancing tumor", false),
    t("L12", "necrotic tumor core", false),
    t("L13", "peritumoral edema", false),
    t("L14", "myocardial infarction", false),
    t("L15", "no reflow", false),
    t("L16", "brain aneurysm", false),
    t("L17", "neuroblastoma", false),
    t("L18", "prostate afms", false),
    t("L19", "hypoxic-ischemic", false),
    t("L20", "breast tumor", false),
    t("L21", "glioma", false),
    t("L22", "thyroid nodule", false),
    t("L23", "skin lesion", false),
    t("L24", "polyp", false),
    t("L25", "lung nodule", false),
];

/// Case- and whitespace-insensitive form used for all name lookups.
pub fn normalize_name(name: &str) -> String {
    name.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

pub fn lookup(name: &str) -> Option<&'static Target> {
    let key = normalize_name(name);
    CATALOG.iter().find(|t| t.name == key)
}

pub fn anatomy_group(name: &str) -> Option<AnatomyGroup> {
    lookup(name).map(|t| t.group())
}
