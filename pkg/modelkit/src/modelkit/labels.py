"""The 17-label scheme contract shared with the measurement pipeline.

The pipeline consumes exported artifacts; `metadata.json` carries these label
names and templates so both sides provably generate identical hypothesis
strings.  Order is the canonical bit-field order of the labeled-corpus
format.
"""

TOPIC_MISCONDUCT = "misconduct"
TOPIC_MODERATION = "moderation"
TOPIC_EXPECTED = "expected_conduct"
TOPIC_VALUES = "value_justification"

MISCONDUCT_SUBTOPICS = (
    "harassment_and_threat",
    "hate_and_discrimination",
    "exploiting_and_cheating",
    "abuse_of_play",
    "circumventing_moderation",
    "inappropriate_content",
    "privacy_breach",
    "impersonation",
    "unauthorized_transaction",
    "fraud_and_scamming",
    "law_violation",
)
MODERATION_SUBTOPICS = ("moderation_consequence", "moderation_mechanism")

LABELS = ((TOPIC_MISCONDUCT,) + MISCONDUCT_SUBTOPICS
          + (TOPIC_MODERATION,) + MODERATION_SUBTOPICS
          + (TOPIC_EXPECTED, TOPIC_VALUES))

PARENT = {s: TOPIC_MISCONDUCT for s in MISCONDUCT_SUBTOPICS}
PARENT.update({s: TOPIC_MODERATION for s in MODERATION_SUBTOPICS})

DISPLAY_NAMES = {
    TOPIC_MISCONDUCT: "Misconduct",
    "harassment_and_threat": "Harassment and threat",
    "hate_and_discrimination": "Hate and discrimination",
    "exploiting_and_cheating": "Exploiting and cheating",
    "abuse_of_play": "Abuse of play and antagonistic play",
    "circumventing_moderation": "Circumventing and abusing moderation mechanism",
    "inappropriate_content": "Inappropriate content creation and sharing",
    "privacy_breach": "Privacy breach",
    "impersonation": "Impersonation and identity theft",
    "unauthorized_transaction": "Unauthorized transaction and commercialization",
    "fraud_and_scamming": "Fraud and scamming",
    "law_violation": "Law violation",
    TOPIC_MODERATION: "Moderation",
    "moderation_consequence": "Moderation consequence",
    "moderation_mechanism": "Moderation mechanism",
    TOPIC_EXPECTED: "Expected conduct",
    TOPIC_VALUES: "Value justification",
}

HYPOTHESIS_TEMPLATE = "The text is about {label}"
INPUT_TEMPLATE = "premise: {premise} hypothesis: {hypothesis}"
POSITIVE_TARGET = "yes"
NEGATIVE_TARGET = "no"


def hypothesis(label: str) -> str:
    return HYPOTHESIS_TEMPLATE.format(label=DISPLAY_NAMES[label])


def nli_input(premise: str, label: str) -> str:
    return INPUT_TEMPLATE.format(premise=premise, hypothesis=hypothesis(label))


def hierarchy_consistent(true_labels: set) -> bool:
    return all(PARENT[s] in true_labels for s in true_labels if s in PARENT)
