//! Prompt templates for the characterizer, labeler and tree comparison.
//!
//! Templates are stored verbatim under `templates/` with `{name}`
//! placeholders, substituted in a single pass so argument text is never
//! re-scanned for placeholders.

const LABEL: &str = include_str!("templates/label.txt");
const EXPLORE: &str = include_str!("templates/explore.txt");
const ENVISION: &str = include_str!("templates/envision.txt");
const PROPERTIES: &str = include_str!("templates/properties.txt");
const GROUNDINGS: &str = include_str!("templates/groundings.txt");
const COMPARE: &str = include_str!("templates/compare.txt");

const SUPPORTING_PHRASE: &str = "make these posts good evidence of the trend";
const REFUTING_PHRASE: &str = "make these posts refute the trend";

/// A cluster as shown to the LLM: its name and example (centroid) posts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterView {
    pub name: String,
    pub posts: Vec<String>,
}

fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + 256);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let hit = after.find('}').and_then(|close| {
            let key = &after[..close];
            vars.iter()
                .find(|(k, _)| *k == key)
                .map(|(_, v)| (close, *v))
        });
        match hit {
            Some((close, value)) => {
                out.push_str(value);
                rest = &after[close + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}

/// Collapse line breaks so each category stays on one line.
fn one_line(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn category_line(c: &ClusterView) -> String {
    let posts: Vec<String> = c.posts.iter().map(|p| one_line(p)).collect();
    format!("{}: {}", one_line(&c.name), posts.join(", "))
}

pub fn render_label_prompt(trend: &str, post: &str) -> String {
    render(LABEL, &[("trend", trend), ("post", post)])
}

/// Categories are numbered from 1 in the order given.
pub fn render_explore_prompt(trend: &str, clusters: &[ClusterView], pbf: usize, dbf: usize) -> String {
    let categories = clusters
        .iter()
        .enumerate()
        .map(|(i, c)| format!("{}. {}", i + 1, category_line(c)))
        .collect::<Vec<_>>()
        .join("\n");
    render(
        EXPLORE,
        &[
            ("trend", trend),
            ("pbf", &pbf.to_string()),
            ("dbf", &dbf.to_string()),
            ("categories", &categories),
        ],
    )
}

pub fn render_envision_prompt(trend: &str, clusters: &[ClusterView], ebf: usize, n: usize) -> String {
    let categories = clusters
        .iter()
        .map(category_line)
        .collect::<Vec<_>>()
        .join("\n");
    render(
        ENVISION,
        &[
            ("trend", trend),
            ("ebf", &ebf.to_string()),
            ("n", &n.to_string()),
            ("categories", &categories),
        ],
    )
}

/// Posts are wrapped in `'''` and separated by blank lines, as in the
/// template's own example. The refuting variant asks what makes the posts
/// refute the trend instead of what makes them good evidence of it.
pub fn render_properties_prompt<S: AsRef<str>>(trend: &str, posts: &[S], supporting: bool) -> String {
    let posts = posts
        .iter()
        .map(|p| format!("'''{}'''", p.as_ref()))
        .collect::<Vec<_>>()
        .join("\n\n");
    let prompt = render(PROPERTIES, &[("trend", trend), ("posts", &posts)]);
    if supporting {
        prompt
    } else {
        // Only template text carries the phrase; substitute before filling.
        render(
            &PROPERTIES.replace(SUPPORTING_PHRASE, REFUTING_PHRASE),
            &[("trend", trend), ("posts", &posts)],
        )
    }
}

pub fn render_groundings_prompt<S: AsRef<str>>(properties: &[S], num_groundings: usize) -> String {
    let properties = properties
        .iter()
        .map(|p| p.as_ref())
        .collect::<Vec<_>>()
        .join("\n");
    render(
        GROUNDINGS,
        &[
            ("num_groundings", &num_groundings.to_string()),
            ("properties", &properties),
        ],
    )
}

/// Ask for polarity axes separating two trees' property lists, each scored
/// 0-10 for how useful it is in finding evidence within each community.
pub fn render_compare_prompt<S: AsRef<str>>(
    trend: &str,
    label_a: &str,
    properties_a: &[S],
    label_b: &str,
    properties_b: &[S],
) -> String {
    let list = |ps: &[S]| {
        ps.iter()
            .map(|p| format!("- {}", p.as_ref()))
            .collect::<Vec<_>>()
            .join("\n")
    };
    render(
        COMPARE,
        &[
            ("trend", trend),
            ("label_a", label_a),
            ("label_b", label_b),
            ("properties_a", &list(properties_a)),
            ("properties_b", &list(properties_b)),
        ],
    )
}
