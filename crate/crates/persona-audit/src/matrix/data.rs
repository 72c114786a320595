//! Loading and lookup of the bundled template and descriptor tables.
//!
//! Templates and descriptors ship as versioned TOML files under `data/` and
//! are embedded into the binary; users can point a run at alternative files
//! to extend the demographic axes without recompiling.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use serde::Deserialize;

use super::types::{DemographicPriming, Mode, Phrasing, RoleAdoption, TaskKind};
use crate::error::{Error, Result};

const BUNDLED_TEMPLATES: &str = include_str!("../../data/templates.toml");
const BUNDLED_DESCRIPTORS: &str = include_str!("../../data/descriptors.toml");

/// One template cell of the 3×3×2 matrix. `open` is used for free-text
/// tasks, `closed` for the survey task.
#[derive(Debug, Clone, Deserialize)]
pub struct TemplateCell {
    pub role: RoleAdoption,
    pub priming: DemographicPriming,
    pub phrasing: Phrasing,
    pub open: String,
    pub closed: String,
}

/// Task instruction strings; `second_person` is used by direct and interview
/// cells, `third_person` by third-person cells.
#[derive(Debug, Clone, Deserialize)]
pub struct TaskStrings {
    pub kind: TaskKind,
    pub second_person: String,
    pub third_person: String,
}

/// A race/ethnicity entry. Entries with `closed_ended = false` exist only in
/// the open-ended grids because the human reference data lacks them.
#[derive(Debug, Clone, Deserialize)]
pub struct RaceEntry {
    pub slug: String,
    /// Verbatim explicit descriptor, e.g. "Middle-Eastern".
    pub label: String,
    pub closed_ended: bool,
    pub surnames: Vec<String>,
}

/// A gender entry with its descriptor slots and pronoun paradigm.
#[derive(Debug, Clone, Deserialize)]
pub struct GenderEntry {
    pub slug: String,
    pub closed_ended: bool,
    /// Noun phrase: "man", "woman", "nonbinary person".
    pub g1: String,
    /// Structured label: "male", "female", "nonbinary".
    pub g2: String,
    /// Subject pronoun.
    pub p1: String,
    /// Reflexive pronoun.
    pub p2: String,
    /// Possessive pronoun.
    pub p3: String,
    /// Title: "Mr.", "Ms.", "Mx.".
    pub p4: String,
    /// Object pronoun; never substituted into templates, but part of the
    /// paradigm the redaction lexicon must cover.
    pub object_pronoun: String,
}

/// The list placeholders used by interview templates, in open-ended and
/// closed-ended variants.
#[derive(Debug, Clone, Deserialize)]
pub struct Lists {
    pub r_list1: String,
    pub r_list2: String,
    pub g_list1: String,
    pub g_list2: String,
}

#[derive(Debug, Clone, Deserialize)]
struct ListsByMode {
    open: Lists,
    closed: Lists,
}

#[derive(Debug, Deserialize)]
struct TemplatesFile {
    #[allow(dead_code)]
    version: u32,
    template: Vec<TemplateCell>,
    task: Vec<TaskStrings>,
}

#[derive(Debug, Deserialize)]
struct DescriptorsFile {
    #[allow(dead_code)]
    version: u32,
    race: Vec<RaceEntry>,
    gender: Vec<GenderEntry>,
    lists: ListsByMode,
}

/// Descriptor slots a template placeholder can resolve to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Slot {
    /// `[G1]` — gender noun phrase.
    G1,
    /// `[G2]` — structured gender label.
    G2,
    /// `[P1]` — subject pronoun.
    P1,
    /// `[P2]` — reflexive pronoun.
    P2,
    /// `[P3]` — possessive pronoun.
    P3,
    /// `[P4]` — title.
    P4,
    /// `[NM]` — the surname list for a race (lookup) or the persona's
    /// concrete surname (rendering).
    NmList,
    /// `[R]` — explicit race descriptor.
    RExplicit,
    /// `[R_list1]` — prose race list.
    RList1,
    /// `[R_list2]` — quoted race list.
    RList2,
    /// `[G_list1]` — prose gender list.
    GList1,
    /// `[G_list2]` — quoted gender list.
    GList2,
}

impl Slot {
    /// The placeholder token as it appears in templates.
    pub fn placeholder(self) -> &'static str {
        match self {
            Slot::G1 => "[G1]",
            Slot::G2 => "[G2]",
            Slot::P1 => "[P1]",
            Slot::P2 => "[P2]",
            Slot::P3 => "[P3]",
            Slot::P4 => "[P4]",
            Slot::NmList => "[NM]",
            Slot::RExplicit => "[R]",
            Slot::RList1 => "[R_list1]",
            Slot::RList2 => "[R_list2]",
            Slot::GList1 => "[G_list1]",
            Slot::GList2 => "[G_list2]",
        }
    }
}

/// A descriptor lookup result: a single string or an ordered list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DescriptorValue {
    Single(String),
    List(Vec<String>),
}

impl DescriptorValue {
    /// Unwraps a single value; errors for list slots.
    pub fn into_single(self) -> Result<String> {
        match self {
            DescriptorValue::Single(s) => Ok(s),
            DescriptorValue::List(_) => Err(Error::Data(
                "expected a single descriptor, found a list".to_string(),
            )),
        }
    }
}

/// The loaded template and descriptor tables.
#[derive(Debug, Clone)]
pub struct MatrixData {
    templates: Vec<TemplateCell>,
    tasks: Vec<TaskStrings>,
    races: Vec<RaceEntry>,
    genders: Vec<GenderEntry>,
    lists_open: Lists,
    lists_closed: Lists,
}

impl MatrixData {
    /// The tables shipped with the crate.
    pub fn bundled() -> &'static MatrixData {
        static BUNDLED: OnceLock<MatrixData> = OnceLock::new();
        BUNDLED.get_or_init(|| {
            MatrixData::from_strs(BUNDLED_TEMPLATES, BUNDLED_DESCRIPTORS)
                .expect("bundled matrix data must parse")
        })
    }

    /// Parses template and descriptor tables from TOML text.
    pub fn from_strs(templates: &str, descriptors: &str) -> Result<Self> {
        let tf: TemplatesFile = toml::from_str(templates)
            .map_err(|e| Error::Data(format!("templates table: {e}")))?;
        let df: DescriptorsFile = toml::from_str(descriptors)
            .map_err(|e| Error::Data(format!("descriptor table: {e}")))?;
        let data = MatrixData {
            templates: tf.template,
            tasks: tf.task,
            races: df.race,
            genders: df.gender,
            lists_open: df.lists.open,
            lists_closed: df.lists.closed,
        };
        data.validate()?;
        Ok(data)
    }

    /// Loads tables from files on disk.
    pub fn load(templates_path: &std::path::Path, descriptors_path: &std::path::Path) -> Result<Self> {
        let templates = std::fs::read_to_string(templates_path)?;
        let descriptors = std::fs::read_to_string(descriptors_path)?;
        Self::from_strs(&templates, &descriptors)
    }

    fn validate(&self) -> Result<()> {
        for role in RoleAdoption::ALL {
            for priming in DemographicPriming::ALL {
                for phrasing in Phrasing::ALL {
                    let n = self
                        .templates
                        .iter()
                        .filter(|t| t.role == role && t.priming == priming && t.phrasing == phrasing)
                        .count();
                    if n != 1 {
                        return Err(Error::Data(format!(
                            "expected exactly one template for {role}/{priming}/{phrasing}, found {n}"
                        )));
                    }
                }
            }
        }
        for kind in TaskKind::ALL {
            let n = self.tasks.iter().filter(|t| t.kind == kind).count();
            if n != 1 {
                return Err(Error::Data(format!(
                    "expected exactly one task entry for {kind}, found {n}"
                )));
            }
        }
        let mut seen = BTreeSet::new();
        for race in &self.races {
            if !seen.insert(race.slug.clone()) {
                return Err(Error::Data(format!("duplicate race slug '{}'", race.slug)));
            }
            if race.surnames.is_empty() {
                return Err(Error::Data(format!(
                    "race '{}' has an empty surname list",
                    race.slug
                )));
            }
        }
        let mut seen = BTreeSet::new();
        for gender in &self.genders {
            if !seen.insert(gender.slug.clone()) {
                return Err(Error::Data(format!(
                    "duplicate gender slug '{}'",
                    gender.slug
                )));
            }
        }
        Ok(())
    }

    pub fn template(
        &self,
        role: RoleAdoption,
        priming: DemographicPriming,
        phrasing: Phrasing,
    ) -> &TemplateCell {
        self.templates
            .iter()
            .find(|t| t.role == role && t.priming == priming && t.phrasing == phrasing)
            .expect("validated at load: every cell present")
    }

    pub fn task(&self, kind: TaskKind) -> &TaskStrings {
        self.tasks
            .iter()
            .find(|t| t.kind == kind)
            .expect("validated at load: every task present")
    }

    /// Races in table order.
    pub fn races(&self) -> &[RaceEntry] {
        &self.races
    }

    /// Genders in table order.
    pub fn genders(&self) -> &[GenderEntry] {
        &self.genders
    }

    pub fn race(&self, slug: &str) -> Result<&RaceEntry> {
        self.races.iter().find(|r| r.slug == slug).ok_or_else(|| {
            Error::Config(format!("unknown race '{slug}' (not in the descriptor table)"))
        })
    }

    pub fn gender(&self, slug: &str) -> Result<&GenderEntry> {
        self.genders.iter().find(|g| g.slug == slug).ok_or_else(|| {
            Error::Config(format!(
                "unknown gender '{slug}' (not in the descriptor table)"
            ))
        })
    }

    pub fn lists(&self, mode: Mode) -> &Lists {
        match mode {
            Mode::Open => &self.lists_open,
            Mode::Closed => &self.lists_closed,
        }
    }

    fn check_closed(&self, available: bool, slot: Slot, which: &str, mode: Mode) -> Result<()> {
        if mode == Mode::Closed && !available {
            return Err(Error::MissingDescriptor {
                placeholder: slot.placeholder().to_string(),
                detail: format!("{which} is not available for closed-ended tasks"),
            });
        }
        Ok(())
    }

    /// Returns the verbatim descriptor(s) for a slot. Race-keyed slots need
    /// `race`, gender-keyed slots need `gender`; list slots need neither.
    pub fn descriptor_lookup(
        &self,
        race: Option<&str>,
        gender: Option<&str>,
        slot: Slot,
        mode: Mode,
    ) -> Result<DescriptorValue> {
        let need_race = || {
            race.ok_or_else(|| Error::MissingDescriptor {
                placeholder: slot.placeholder().to_string(),
                detail: "race-keyed slot looked up without a race".to_string(),
            })
        };
        let need_gender = || {
            gender.ok_or_else(|| Error::MissingDescriptor {
                placeholder: slot.placeholder().to_string(),
                detail: "gender-keyed slot looked up without a gender".to_string(),
            })
        };
        match slot {
            Slot::RExplicit => {
                let entry = self.race(need_race()?)?;
                self.check_closed(entry.closed_ended, slot, &format!("race '{}'", entry.slug), mode)?;
                Ok(DescriptorValue::Single(entry.label.clone()))
            }
            Slot::NmList => {
                let entry = self.race(need_race()?)?;
                self.check_closed(entry.closed_ended, slot, &format!("race '{}'", entry.slug), mode)?;
                Ok(DescriptorValue::List(entry.surnames.clone()))
            }
            Slot::G1 | Slot::G2 | Slot::P1 | Slot::P2 | Slot::P3 | Slot::P4 => {
                let entry = self.gender(need_gender()?)?;
                self.check_closed(
                    entry.closed_ended,
                    slot,
                    &format!("gender '{}'", entry.slug),
                    mode,
                )?;
                let value = match slot {
                    Slot::G1 => &entry.g1,
                    Slot::G2 => &entry.g2,
                    Slot::P1 => &entry.p1,
                    Slot::P2 => &entry.p2,
                    Slot::P3 => &entry.p3,
                    Slot::P4 => &entry.p4,
                    _ => unreachable!(),
                };
                Ok(DescriptorValue::Single(value.clone()))
            }
            Slot::RList1 => Ok(DescriptorValue::Single(self.lists(mode).r_list1.clone())),
            Slot::RList2 => Ok(DescriptorValue::Single(self.lists(mode).r_list2.clone())),
            Slot::GList1 => Ok(DescriptorValue::Single(self.lists(mode).g_list1.clone())),
            Slot::GList2 => Ok(DescriptorValue::Single(self.lists(mode).g_list2.clone())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_tables_parse_and_cover_the_matrix() {
        let data = MatrixData::bundled();
        assert_eq!(data.races().len(), 5);
        assert_eq!(data.genders().len(), 3);
        for race in data.races() {
            assert_eq!(race.surnames.len(), 10, "race {}", race.slug);
        }
        // Spot checks straight from the tables.
        assert_eq!(data.race("hispanic").unwrap().label, "Hispanic");
        assert_eq!(data.race("middle-eastern").unwrap().surnames[4], "Yılmaz");
        assert!(!data.race("middle-eastern").unwrap().closed_ended);
        assert!(!data.gender("nonbinary").unwrap().closed_ended);
    }

    #[test]
    fn descriptor_lookups_match_the_tables() {
        let data = MatrixData::bundled();
        assert_eq!(
            data.descriptor_lookup(None, Some("nonbinary"), Slot::P4, Mode::Open)
                .unwrap(),
            DescriptorValue::Single("Mx.".to_string())
        );
        assert_eq!(
            data.descriptor_lookup(None, Some("male"), Slot::G1, Mode::Open)
                .unwrap(),
            DescriptorValue::Single("man".to_string())
        );
        match data
            .descriptor_lookup(Some("middle-eastern"), None, Slot::NmList, Mode::Open)
            .unwrap()
        {
            DescriptorValue::List(names) => {
                assert_eq!(names.len(), 10);
                assert_eq!(&names[..3], ["Khan", "Ali", "Ahmed"]);
            }
            other => panic!("expected a list, got {other:?}"),
        }
    }

    #[test]
    fn list_slots_depend_on_mode() {
        let data = MatrixData::bundled();
        let open = data
            .descriptor_lookup(None, None, Slot::RList1, Mode::Open)
            .unwrap()
            .into_single()
            .unwrap();
        assert_eq!(open, "White, Black, Asian, Middle-Eastern or Hispanic");
        let closed = data
            .descriptor_lookup(None, None, Slot::RList1, Mode::Closed)
            .unwrap()
            .into_single()
            .unwrap();
        assert_eq!(closed, "White, Black, Asian or Hispanic");
        let g_open = data
            .descriptor_lookup(None, None, Slot::GList1, Mode::Open)
            .unwrap()
            .into_single()
            .unwrap();
        assert_eq!(g_open, "a man, a woman or a nonbinary person");
    }

    #[test]
    fn closed_mode_rejects_open_only_groups() {
        let data = MatrixData::bundled();
        let err = data
            .descriptor_lookup(None, Some("nonbinary"), Slot::G1, Mode::Closed)
            .unwrap_err();
        match err {
            Error::MissingDescriptor { placeholder, detail } => {
                assert_eq!(placeholder, "[G1]");
                assert!(detail.contains("nonbinary"), "detail: {detail}");
            }
            other => panic!("expected MissingDescriptor, got {other:?}"),
        }
        assert!(data
            .descriptor_lookup(Some("middle-eastern"), None, Slot::RExplicit, Mode::Closed)
            .is_err());
        assert!(data
            .descriptor_lookup(Some("middle-eastern"), None, Slot::RExplicit, Mode::Open)
            .is_ok());
    }

    #[test]
    fn every_template_cell_is_present_once() {
        let data = MatrixData::bundled();
        for role in RoleAdoption::ALL {
            for priming in DemographicPriming::ALL {
                for phrasing in Phrasing::ALL {
                    let cell = data.template(role, priming, phrasing);
                    assert_eq!(cell.role, role);
                    assert_eq!(cell.priming, priming);
                    assert_eq!(cell.phrasing, phrasing);
                }
            }
        }
    }

    #[test]
    fn third_person_v2_cells_are_task_only() {
        let data = MatrixData::bundled();
        for priming in DemographicPriming::ALL {
            let cell = data.template(RoleAdoption::ThirdPerson, priming, Phrasing::V2);
            assert_eq!(cell.open, "[TASK]");
            assert_eq!(cell.closed, "[TASK]");
        }
    }

    #[test]
    fn malformed_tables_are_rejected() {
        // Missing one template cell.
        let templates = r#"
version = 1
[[template]]
role = "direct"
priming = "explicit"
phrasing = "v1"
open = "x [TASK]"
closed = "x [TASK]"
"#;
        let descriptors = std::fs::read_to_string(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/data/descriptors.toml"
        ))
        .unwrap();
        let err = MatrixData::from_strs(templates, &descriptors).unwrap_err();
        assert!(matches!(err, Error::Data(_)), "got {err:?}");
    }
}
