//! Reports behind the golden render files.

use attriq::attribution::{integrated_gradients, step_reports, AttributionReport, IGConfig};
use attriq::fixtures;
use attriq::models::{ClassifierModel, Instance, Model};
use attriq::report::{render_alignment, render_text, TextMode};
use attriq::tableexec::Answer;

pub fn classifier_report() -> AttributionReport {
    let d = fixtures::color_corpus();
    let inst = Instance::new("golden-cls", Instance::tokenize("what color is the dog"), Answer::label("white"));
    // first seed whose prediction differs from the empty question's
    (0..)
        .map(|seed| {
            let m = Model::Classifier(ClassifierModel::random(d.vocab.clone(), fixtures::color_classes(), 4, seed));
            integrated_gradients(&m, &inst, &IGConfig::with_steps(64)).unwrap()
        })
        .find(|r| !r.omitted)
        .unwrap()
}

pub fn table_reports() -> Vec<AttributionReport> {
    let d = fixtures::planted_corpus(11);
    let m = fixtures::planted_table_model(&d.vocab);
    let inst = d.instances.iter().find(|i| i.question.contains(&"most".to_string())).unwrap();
    step_reports(&m, inst, &IGConfig::with_steps(32)).unwrap()
}

/// `(golden file name, rendered document)` for every golden file.
pub fn renders() -> Vec<(&'static str, String)> {
    let c = classifier_report();
    let t = table_reports();
    let shown = t.iter().find(|r| !r.omitted).expect("a non-omitted selection");
    let (csv, svg) = render_alignment(&t).unwrap();
    vec![
        ("classifier.html", render_text(&c, TextMode::Html)),
        ("classifier.ansi", render_text(&c, TextMode::Ansi)),
        ("table_step.html", render_text(shown, TextMode::Html)),
        ("table_step.ansi", render_text(shown, TextMode::Ansi)),
        ("alignment.csv", csv),
        ("alignment.svg", svg),
    ]
}
