"""Prompt templates used by evidence retrieval and diagnosis-label extraction.

Template bodies carry two placeholders: ``<input>`` for the note text and
``<query>`` for the queried term. Gate prompts are binary (``-Yes -No``
choices); extraction prompts are freeform.
"""

from __future__ import annotations

from .gateway import PromptTemplate

RISK_GATE = PromptTemplate(
    template_id="risk-gate",
    body=(
        "Read the following clinical note of a patient:\n"
        "<input>\n"
        "Question: Is the patient at risk of <query>? Choice: -Yes -No\n"
        "Answer: "
    ),
    expected_answer_kind="binary",
)

RISK_EXTRACT = PromptTemplate(
    template_id="risk-extract",
    body=(
        "Read the following clinical note of a patient:\n"
        "<input>\n"
        "Based on the note, why is the patient at risk of <query>?\n"
        "Answer step by step:"
    ),
    expected_answer_kind="freeform",
)

SIGNS_GATE = PromptTemplate(
    template_id="signs-gate",
    body=(
        "Read the following clinical note of a patient:\n"
        "<input>\n"
        "Question: Does the patient have <query>? Choice: -Yes -No\n"
        "Answer: "
    ),
    expected_answer_kind="binary",
)

SIGNS_EXTRACT = PromptTemplate(
    template_id="signs-extract",
    body=(
        "Read the following clinical note of a patient:\n"
        "<input>\n"
        "Question: Extract signs of <query> from the note.\n"
        "Answer: "
    ),
    expected_answer_kind="freeform",
)

RISK_FACTOR_GATE = PromptTemplate(
    template_id="risk-factor-gate",
    body=(
        "Read the following clinical note of a patient:\n"
        "<input>\n"
        "Question: Does the patient have <query>? Choice: -Yes -No\n"
        "Answer: "
    ),
    expected_answer_kind="binary",
)

RISK_FACTOR_EXTRACT = PromptTemplate(
    template_id="risk-factor-extract",
    body=(
        "Read the following clinical note of a patient:\n"
        "<input>\n"
        "What evidence is there that the patient has <query>?\n"
        "Answer: "
    ),
    expected_answer_kind="freeform",
)

DIAGNOSIS_GATE = PromptTemplate(
    template_id="diagnosis-gate",
    body=(
        "Read the following report:\n"
        "\n"
        "<input>\n"
        "\n"
        "Question: Is there a confident diagnosis of the patient's condition? Choice: -Yes -No\n"
        "Answer: "
    ),
    expected_answer_kind="binary",
)

DIAGNOSIS_EXTRACT = PromptTemplate(
    template_id="diagnosis-extract",
    body=(
        "Read the following report:\n"
        "\n"
        "<input>\n"
        "\n"
        "Answer step by step: What is the correct diagnosis of the patient's condition?\n"
        "Answer:"
    ),
    expected_answer_kind="freeform",
)

DIAGNOSIS_TERMS = PromptTemplate(
    template_id="diagnosis-terms",
    body=(
        "Here is a diagnosis of a patient:\n"
        "\n"
        "<input>\n"
        "\n"
        "Question: Provide a list of diagnostic terms or write none.\n"
        "Answer: "
    ),
    expected_answer_kind="list",
)

# One gate/extract pair per query kind.
GATE_BY_KIND = {
    "risk": RISK_GATE,
    "signs": SIGNS_GATE,
    "risk_factor": RISK_FACTOR_GATE,
}

EXTRACT_BY_KIND = {
    "risk": RISK_EXTRACT,
    "signs": SIGNS_EXTRACT,
    "risk_factor": RISK_FACTOR_EXTRACT,
}
