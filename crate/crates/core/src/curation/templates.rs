//! Pinned prompt templates. Their SHA-256 hashes key the reply cache and
//! are stored next to every generated artifact.

use super::cache::sha256_hex;
use crate::evaluation::Broad;

pub const REPORT_CLEAN: &str = "This is the content from the pathology report. Please remove some redundant irrelevant information from the original report, such as technical details of pathology department procedures, Symbols unrelated to the pathological report, specimen handling and processing information, redundant administrative or legal statements, and some repeated information. Show me the cleaned report content.";

pub const CAPTION: &str = "Based on the above pathological report content, generate a detailed paragraph that summarizes the essential pathological findings. The paragraph should include key information such as the diagnosis, tumor characteristics, margin status, lymph node involvement, and other relevant pathological findings. The summary should not mention the source being a report and should exclude any specific sizes or measurements. The paragraph should be written in a clear and cohesive manner, covering all important points without unnecessary details.";

pub const SYSTEM: &str = "You are an AI assistant proficient in digital pathology. You will receive a pathology report for whole slide images.";

pub const GENERAL: &str = "Based on the above pathological report content, your task is to use the provided information, create 2 multi-choice questions amd 2 short-answer questions for each narrow category. The design question should be able to be answered based on the content of the image. Design medical questions very carefully and only ask questions when you are sure of the answer.  Answers should be specific and avoid ambiguity. When generating questions, it is necessary to indicate their broad category and narrow category.  For multi-choice questions, you should (1) \u{201c}question type\u{201d} is \u{201c}multi-choice questions\u{201d}.  (2) Provide the options and answer and reasoning. Provide four answer choices (A, B, C, and D), ensuring that one choice is correct and the other three are plausible but incorrect. (3) Aim to include one answer that is incorrect but very similar to the correct one to increase the difficulty level.  For short-answer questions: (1) \u{201c}question type\u{201d} is \u{201c}short-answer questions\u{201d}. (2) Generating questions with different content from multiple-choice questions. For all questions: (1) Do not mention that the information source is report in \u{201c}question\u{201d}, \u{201c}anwser\u{201d}. (2) Return JSON format in {\u{201c}question type\u{201d}: xxx, \u{201c}question\u{201d}: xxx, \u{201c}options\u{201d}: [], \u{201c}answer\u{201d}: xxx, \u{201c}broad category\u{201d}: xxx, \u{201c}narrow category\u{201d}: xxx} for each question. The \u{201c}options\u{201d} section is empty for short-answer questions.";

pub const LABEL_TRANSFORM: &str = "Please create prompts for pathology image classification tasks concerning <Task>, transforming traditional labels into a multi-choice question-and-answer format. The original labels include <labels>, ...";

fn broad_scope(b: Broad) -> &'static str {
    match b {
        Broad::Microscopy => "involves assessing the ability to generate microscopy descriptions of pathology images, focusing on clinically relevant features",
        Broad::Diagnosis => "tests the ability of models to suggest a reasonable diagnosis based on histological images and relevant clinical context",
        Broad::Clinical => "tests the ability of models to retrieve and apply clinically relevant background knowledge about diseases",
    }
}

fn narrow_scope(n: &str) -> &'static str {
    match n {
        "Tissue Architecture and Arrangement" => "Questions should evaluate the understanding of overall tissue structure and spatial organization within a histological section.",
        "Cytomorphological Characteristics" => "Questions should focus on the detailed description of individual cell morphology, including nuclear and cytoplasmic features.",
        "Tumor Characteristics" => "Questions should assess the ability to identify and describe features specific to tumors, such as tumor differentiation, invasion, and specific patterns associated with different types of tumors.",
        "Histopathological Changes" => "Questions should evaluate the recognition and description of pathological changes in tissue, such as necrosis, inflammation, fibrosis, and other alterations that indicate disease processes.",
        "Disease Detection" => "Questions should evaluate the model's ability to identify the presence or absence of a disease based on histological features and clinical information.",
        "Disease Classification" => "Questions should focus on distinguishing between different types or subtypes of diseases, assessing the model\u{2019}s capability to classify conditions accurately based on morphological and histopathological criteria.",
        "Grading" => "Questions should assess the model\u{2019}s ability to determine the grade of a disease, particularly tumors, based on the degree of differentiation and cellular atypia observed in histological images.",
        "Staging" => "Questions should evaluate the ability to assign a stage to a disease, particularly in oncology, by assessing the extent of disease spread and involvement of surrounding tissues or organs.",
        "Differential Diagnosis" => "Questions should test the model\u{2019}s ability to provide a differential diagnosis, distinguishing between multiple potential conditions that may present with similar histological and clinical features.",
        "Treatment Guidance" => "Questions should assess the model's ability to recommend appropriate treatment options based on the disease in question, considering factors such as disease stage, patient demographics, and any specific clinical guidelines.",
        "Prognostic Assessment" => "Questions should focus on evaluating the model's ability to predict the likely course and outcome of a disease, including survival rates, potential complications, and long-term outcomes based on clinical and pathological data.",
        "Risk Factors" => "Questions should test the model's knowledge of risk factors associated with specific diseases, including genetic, environmental, and lifestyle factors that may influence disease development or progression.",
        "Biomarker Analysis" => "Questions should evaluate the ability to identify and interpret biomarkers relevant to the diagnosis, prognosis, or treatment of diseases, emphasizing their role in personalized medicine and targeted therapy.",
        _ => "",
    }
}

/// Objective prompt for one broad category, listing each of its narrow
/// categories with its scope definition.
pub fn objective(b: Broad) -> String {
    let mut s = format!(
        "Definition of Broad Category and its corresponding Narrow Categories. \u{201c}\nThe required broad category is {}, which {}. For the narrow category: ",
        b.name(),
        broad_scope(b)
    );
    let parts: Vec<String> = b.narrow().map(|n| format!(" {n}: {}", narrow_scope(n))).collect();
    s.push_str(&parts.join(" "));
    s.push('\u{201d}');
    s
}

/// Label transformation prompt with the task and labels filled in.
pub fn label_transform(task: &str, labels: &[&str]) -> String {
    LABEL_TRANSFORM.replace("<Task>", task).replace("<labels>", &labels.join(", "))
}

pub fn report_clean_hash() -> String {
    sha256_hex(REPORT_CLEAN)
}

pub fn caption_hash() -> String {
    sha256_hex(CAPTION)
}

/// Hash over system, objective and general parts for one broad category.
pub fn qa_hash(b: Broad) -> String {
    sha256_hex(&format!("{SYSTEM}\n{}\n{GENERAL}", objective(b)))
}
