//! Run configuration: sectioned key-value text with units in key names.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::str::FromStr;

use ini::Ini;
use mrdmoc::beam::SpacecraftParams;
use mrdmoc::integrator::MultirateGrid;

use crate::CliError;

/// Sections written into the manifest next to the echoed config.
pub const MANIFEST_SECTIONS: [&str; 2] = ["manifest", "residuals"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum StudyKind {
    Simulate,
    Conservation,
    IntegratorConvergence,
    Maneuver,
    OcpConvergence,
    Tradeoff,
    Size,
}

impl StudyKind {
    pub fn name(self) -> &'static str {
        match self {
            StudyKind::Simulate => "simulate",
            StudyKind::Conservation => "conservation",
            StudyKind::IntegratorConvergence => "integrator_convergence",
            StudyKind::Maneuver => "maneuver",
            StudyKind::OcpConvergence => "ocp_convergence",
            StudyKind::Tradeoff => "tradeoff",
            StudyKind::Size => "size",
        }
    }

    fn needs_free_response(self) -> bool {
        matches!(
            self,
            StudyKind::Simulate | StudyKind::Conservation | StudyKind::IntegratorConvergence
        )
    }

    fn needs_maneuver(self) -> bool {
        matches!(
            self,
            StudyKind::Maneuver | StudyKind::OcpConvergence | StudyKind::Tradeoff
        )
    }
}

impl FromStr for StudyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Ok(match s {
            "simulate" => StudyKind::Simulate,
            "conservation" => StudyKind::Conservation,
            "integrator_convergence" => StudyKind::IntegratorConvergence,
            "maneuver" => StudyKind::Maneuver,
            "ocp_convergence" => StudyKind::OcpConvergence,
            "tradeoff" => StudyKind::Tradeoff,
            "size" => StudyKind::Size,
            other => return Err(format!("unknown study kind `{other}`")),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceKind {
    /// Continuous LQ solution.
    Analytic,
    /// Single-rate solve on a refined grid.
    Fine,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub dt_s: f64,
    pub p: usize,
    pub tf_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManeuverConfig {
    pub theta_tf_deg: f64,
    /// Physical boundary configurations; the angle entries override `theta_tf_deg`.
    pub xi_start: Option<Vec<f64>>,
    pub xi_end: Option<Vec<f64>>,
    /// Scalar multiple of the identity state weight.
    pub state_weight: f64,
    pub control_weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FreeResponseConfig {
    pub eta0: Vec<f64>,
    pub eta_dot0: Vec<f64>,
    pub theta0_rad: f64,
    pub theta_dot0_rad_s: f64,
}

impl FreeResponseConfig {
    pub fn physical(&self) -> (Vec<f64>, Vec<f64>) {
        let mut xi = vec![self.theta0_rad];
        xi.extend(&self.eta0);
        let mut xi_dot = vec![self.theta_dot0_rad_s];
        xi_dot.extend(&self.eta_dot0);
        (xi, xi_dot)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Scenario {
    Maneuver(ManeuverConfig),
    FreeResponse(FreeResponseConfig),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub kinds: Vec<StudyKind>,
    pub dt_list_s: Vec<f64>,
    pub p_list: Vec<usize>,
    pub r_list: Vec<usize>,
    pub reference: ReferenceKind,
    pub refinement: usize,
    pub repetitions: usize,
    /// Stride between macro nodes written to time-series files.
    pub sample_every: usize,
    pub rk4_compare: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub csv: bool,
    pub svg: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub spacecraft: SpacecraftParams,
    pub grid: GridConfig,
    pub r: usize,
    pub scenario: Scenario,
    pub study: StudyConfig,
    pub output: OutputConfig,
    /// Original text, echoed into the manifest.
    pub source: String,
}

const KNOWN_KEYS: &[(&str, &[&str])] = &[
    (
        "spacecraft",
        &[
            "modes",
            "hub_radius_ft",
            "hub_inertia_slug_ft2",
            "tip_mass_slug",
            "tip_inertia_slug_ft2",
            "beam_length_ft",
            "linear_density_slug_per_ft",
            "flexural_rigidity_lb_ft2",
        ],
    ),
    ("grid", &["dt_s", "p", "tf_s"]),
    ("split", &["r"]),
    (
        "maneuver",
        &["theta_tf_deg", "xi_start", "xi_end", "state_weight", "control_weight"],
    ),
    ("free_response", &["eta0", "eta_dot0", "theta0_rad", "theta_dot0_rad_s"]),
    (
        "study",
        &[
            "kind",
            "dt_list_s",
            "p_list",
            "r_list",
            "reference",
            "refinement",
            "repetitions",
            "sample_every",
            "rk4_compare",
        ],
    ),
    ("output", &["dir", "formats"]),
];

/// Key lookup with line-aware diagnostics.
struct Reader<'a> {
    ini: &'a Ini,
    text: &'a str,
}

impl<'a> Reader<'a> {
    fn raw(&self, section: &str, key: &str) -> Option<&'a str> {
        self.ini.section(Some(section)).and_then(|p| p.get(key)).map(str::trim)
    }

    fn line_of(&self, section: &str, key: Option<&str>) -> Option<usize> {
        let mut current = String::new();
        for (i, line) in self.text.lines().enumerate() {
            let t = line.trim();
            if let Some(name) = t.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
                current = name.trim().to_string();
                if key.is_none() && current == section {
                    return Some(i + 1);
                }
                continue;
            }
            if let (Some(k), true) = (key, current == section) {
                if t.split(['=', ':']).next().map(str::trim) == Some(k) {
                    return Some(i + 1);
                }
            }
        }
        None
    }

    fn error(&self, section: &str, key: Option<&str>, message: impl Into<String>) -> CliError {
        let field = match key {
            Some(k) => format!("[{section}] {k}"),
            None => format!("[{section}]"),
        };
        CliError::Config {
            line: self.line_of(section, key),
            field,
            message: message.into(),
        }
    }

    fn parse<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        match self.raw(section, key) {
            None => Ok(None),
            Some(v) => v
                .parse::<T>()
                .map(Some)
                .map_err(|e| self.error(section, Some(key), format!("cannot parse `{v}`: {e}"))),
        }
    }

    fn required<T: FromStr>(&self, section: &str, key: &str) -> Result<T, CliError>
    where
        T::Err: std::fmt::Display,
    {
        self.parse(section, key)?
            .ok_or_else(|| self.error(section, Some(key), "required key is missing"))
    }

    fn list<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<Vec<T>>, CliError>
    where
        T::Err: std::fmt::Display,
    {
        let Some(v) = self.raw(section, key) else {
            return Ok(None);
        };
        let items: Vec<&str> = v.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
        if items.is_empty() {
            return Err(self.error(section, Some(key), "list is empty"));
        }
        items
            .iter()
            .map(|s| {
                s.parse::<T>()
                    .map_err(|e| self.error(section, Some(key), format!("cannot parse `{s}`: {e}")))
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Some)
    }

    fn positive(&self, section: &str, key: &str, v: f64) -> Result<f64, CliError> {
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(self.error(section, Some(key), format!("must be positive and finite, got {v}")))
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let ini = Ini::load_from_str(text).map_err(|e| CliError::Config {
            line: Some(e.line),
            field: "syntax".into(),
            message: e.msg.to_string(),
        })?;
        let rd = Reader { ini: &ini, text };

        for (section, props) in ini.iter() {
            let Some(section) = section else {
                if let Some((k, _)) = props.iter().next() {
                    return Err(rd.error("", Some(k), "key outside any section"));
                }
                continue;
            };
            if MANIFEST_SECTIONS.contains(&section) {
                continue;
            }
            let Some((_, keys)) = KNOWN_KEYS.iter().find(|(s, _)| *s == section) else {
                return Err(rd.error(section, None, "unknown section"));
            };
            for (k, _) in props.iter() {
                if !keys.contains(&k) {
                    return Err(rd.error(section, Some(k), "unknown key"));
                }
            }
        }

        let spacecraft = Self::spacecraft(&rd)?;

        if ini.section(Some("grid")).is_none() {
            return Err(rd.error("grid", None, "section is missing"));
        }
        let grid = GridConfig {
            dt_s: rd.positive("grid", "dt_s", rd.required("grid", "dt_s")?)?,
            p: rd.required("grid", "p")?,
            tf_s: rd.positive("grid", "tf_s", rd.required("grid", "tf_s")?)?,
        };
        if grid.p == 0 {
            return Err(rd.error("grid", Some("p"), "must be at least 1"));
        }
        MultirateGrid::new(0.0, grid.tf_s, grid.dt_s, grid.p)
            .map_err(|e| rd.error("grid", Some("tf_s"), e.to_string()))?;

        let n = spacecraft.num_modes + 1;
        let r: usize = rd.parse("split", "r")?.unwrap_or(1);
        if r == 0 || r > n {
            return Err(rd.error("split", Some("r"), format!("must lie in 1..={n}")));
        }

        let scenario = Self::scenario(&rd, n)?;
        let study = Self::study(&rd, &grid, r, n)?;

        for kind in &study.kinds {
            let ok = match &scenario {
                Scenario::Maneuver(_) => !kind.needs_free_response(),
                Scenario::FreeResponse(_) => !kind.needs_maneuver(),
            };
            if !ok {
                let wanted = if kind.needs_maneuver() {
                    "[maneuver]"
                } else {
                    "[free_response]"
                };
                return Err(rd.error(
                    "study",
                    Some("kind"),
                    format!("study `{}` needs a {wanted} section", kind.name()),
                ));
            }
        }

        let sweeps_dt = study
            .kinds
            .iter()
            .any(|k| matches!(k, StudyKind::IntegratorConvergence | StudyKind::OcpConvergence));
        if sweeps_dt {
            for &dt in &study.dt_list_s {
                for &p in &study.p_list {
                    MultirateGrid::new(0.0, grid.tf_s, dt, p)
                        .map_err(|e| rd.error("study", Some("dt_list_s"), format!("dt_s = {dt}, p = {p}: {e}")))?;
                }
            }
        } else {
            for &p in &study.p_list {
                MultirateGrid::new(0.0, grid.tf_s, grid.dt_s, p)
                    .map_err(|e| rd.error("study", Some("p_list"), format!("p = {p}: {e}")))?;
            }
        }

        let output = OutputConfig {
            dir: PathBuf::from(rd.raw("output", "dir").unwrap_or("results")),
            csv: true,
            svg: match rd.list::<String>("output", "formats")? {
                None => true,
                Some(f) => {
                    for item in &f {
                        if item != "csv" && item != "svg" {
                            return Err(rd.error("output", Some("formats"), format!("unknown format `{item}`")));
                        }
                    }
                    f.iter().any(|s| s == "svg")
                }
            },
        };

        Ok(Self {
            spacecraft,
            grid,
            r,
            scenario,
            study,
            output,
            source: text.to_string(),
        })
    }

    pub fn load(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::parse(&text)
    }

    fn spacecraft(rd: &Reader) -> Result<SpacecraftParams, CliError> {
        let modes: usize = rd.parse("spacecraft", "modes")?.unwrap_or(5);
        let mut sc = SpacecraftParams::reference(modes);
        let fields: [(&str, &mut f64); 7] = [
            ("hub_radius_ft", &mut sc.hub_radius),
            ("hub_inertia_slug_ft2", &mut sc.hub_inertia),
            ("tip_mass_slug", &mut sc.tip_mass),
            ("tip_inertia_slug_ft2", &mut sc.tip_inertia),
            ("beam_length_ft", &mut sc.beam_length),
            ("linear_density_slug_per_ft", &mut sc.beam_linear_density),
            ("flexural_rigidity_lb_ft2", &mut sc.flexural_rigidity),
        ];
        for (key, slot) in fields {
            if let Some(v) = rd.parse::<f64>("spacecraft", key)? {
                *slot = v;
            }
        }
        sc.validate().map_err(|e| rd.error("spacecraft", None, e.to_string()))?;
        Ok(sc)
    }

    fn scenario(rd: &Reader, n: usize) -> Result<Scenario, CliError> {
        let has_m = rd.ini.section(Some("maneuver")).is_some();
        let has_f = rd.ini.section(Some("free_response")).is_some();
        match (has_m, has_f) {
            (true, true) => Err(rd.error(
                "free_response",
                None,
                "exactly one of [maneuver] and [free_response] may be present",
            )),
            (false, false) => Err(rd.error("maneuver", None, "one of [maneuver] or [free_response] is required")),
            (true, false) => {
                let check = |key: &str| -> Result<Option<Vec<f64>>, CliError> {
                    let v = rd.list::<f64>("maneuver", key)?;
                    if let Some(v) = &v {
                        if v.len() != n {
                            return Err(rd.error("maneuver", Some(key), format!("needs {n} entries")));
                        }
                    }
                    Ok(v)
                };
                let m = ManeuverConfig {
                    theta_tf_deg: rd.parse("maneuver", "theta_tf_deg")?.unwrap_or(0.0),
                    xi_start: check("xi_start")?,
                    xi_end: check("xi_end")?,
                    state_weight: rd.parse("maneuver", "state_weight")?.unwrap_or(1.0),
                    control_weight: rd.parse("maneuver", "control_weight")?.unwrap_or(1.0),
                };
                if !(m.state_weight >= 0.0) {
                    return Err(rd.error("maneuver", Some("state_weight"), "must be nonnegative"));
                }
                rd.positive("maneuver", "control_weight", m.control_weight)?;
                Ok(Scenario::Maneuver(m))
            }
            (false, true) => {
                let nm = n - 1;
                let eta0 = rd
                    .list::<f64>("free_response", "eta0")?
                    .unwrap_or_else(|| vec![0.0; nm]);
                let eta_dot0 = rd
                    .list::<f64>("free_response", "eta_dot0")?
                    .unwrap_or_else(|| vec![0.0; nm]);
                for (key, v) in [("eta0", &eta0), ("eta_dot0", &eta_dot0)] {
                    if v.len() != nm {
                        return Err(rd.error(
                            "free_response",
                            Some(key),
                            format!("needs {nm} entries (one per assumed mode), got {}", v.len()),
                        ));
                    }
                }
                Ok(Scenario::FreeResponse(FreeResponseConfig {
                    eta0,
                    eta_dot0,
                    theta0_rad: rd.parse("free_response", "theta0_rad")?.unwrap_or(0.0),
                    theta_dot0_rad_s: rd.parse("free_response", "theta_dot0_rad_s")?.unwrap_or(0.0),
                }))
            }
        }
    }

    fn study(rd: &Reader, grid: &GridConfig, r: usize, n: usize) -> Result<StudyConfig, CliError> {
        let kinds: Vec<StudyKind> = rd.raw("study", "kind").map_or(Ok(Vec::new()), |v| {
            v.split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<StudyKind>().map_err(|e| rd.error("study", Some("kind"), e)))
                .collect::<Result<BTreeSet<_>, _>>()
                .map(|s| s.into_iter().collect())
        })?;
        if kinds.is_empty() {
            return Err(rd.error("study", Some("kind"), "no study requested"));
        }
        let mut dt_list_s = rd.list::<f64>("study", "dt_list_s")?.unwrap_or_else(|| vec![grid.dt_s]);
        for &dt in &dt_list_s {
            rd.positive("study", "dt_list_s", dt)?;
        }
        dt_list_s.sort_by(|a, b| b.total_cmp(a));
        dt_list_s.dedup();
        let mut p_list = rd.list::<usize>("study", "p_list")?.unwrap_or_else(|| vec![grid.p]);
        p_list.sort_unstable();
        p_list.dedup();
        if p_list.contains(&0) {
            return Err(rd.error("study", Some("p_list"), "micro counts must be at least 1"));
        }
        let mut r_list = rd.list::<usize>("study", "r_list")?.unwrap_or_else(|| vec![r]);
        r_list.sort_unstable();
        r_list.dedup();
        if r_list.iter().any(|&x| x == 0 || x > n) {
            return Err(rd.error("study", Some("r_list"), format!("splits must lie in 1..={n}")));
        }
        let reference = match rd.raw("study", "reference").unwrap_or("analytic") {
            "analytic" => ReferenceKind::Analytic,
            "fine" => ReferenceKind::Fine,
            other => {
                return Err(rd.error(
                    "study",
                    Some("reference"),
                    format!("expected analytic or fine, got `{other}`"),
                ))
            }
        };
        let refinement: usize = rd.parse("study", "refinement")?.unwrap_or(8);
        if refinement == 0 {
            return Err(rd.error("study", Some("refinement"), "must be at least 1"));
        }
        let repetitions: usize = rd.parse("study", "repetitions")?.unwrap_or(3);
        if kinds.contains(&StudyKind::Tradeoff) && repetitions < 1 {
            return Err(rd.error("study", Some("repetitions"), "timing needs at least one repetition"));
        }
        let sample_every: usize = rd.parse("study", "sample_every")?.unwrap_or(1);
        if sample_every == 0 {
            return Err(rd.error("study", Some("sample_every"), "must be at least 1"));
        }
        Ok(StudyConfig {
            kinds,
            dt_list_s,
            p_list,
            r_list,
            reference,
            refinement,
            repetitions,
            sample_every,
            rk4_compare: rd.parse("study", "rk4_compare")?.unwrap_or(true),
        })
    }
}
