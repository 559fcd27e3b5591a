from dataclasses import dataclass, field
from typing import Dict, List


@dataclass
class ImageMatches:
    """
    Matching outcome for a single image.

    Attributes:
    - image_path: The evaluated image.
    - ground_truth: Number of annotated objects.
    - true_positives: Detections matched one-to-one to an object.
    - false_positives: Detections left unmatched.
    """
    image_path: str
    ground_truth: int
    true_positives: int
    false_positives: int


@dataclass
class EvalReport:
    """
    Detection-quality summary over an annotated image set.

    Attributes:
    - detection_rate: TP / GT (0 when there is no ground truth).
    - false_positives_per_image: Unmatched detections / images.
    - precision: TP / detections (0 when there are no detections).
    - recall: Same as detection_rate, reported at the configured IoU.
    - iou_threshold: IoU needed for a match.
    - images, ground_truth, detections, true_positives, false_positives: Raw counts.
    - per_image: One ImageMatches per image, in annotation order.
    """
    detection_rate: float
    false_positives_per_image: float
    precision: float
    recall: float
    iou_threshold: float
    images: int
    ground_truth: int
    detections: int
    true_positives: int
    false_positives: int
    per_image: List[ImageMatches] = field(default_factory=list)

    def to_text(self) -> str:
        """
        Renders the report as `key value` lines with fixed formatting.
        """
        lines = [
            f"images {self.images}",
            f"ground_truth {self.ground_truth}",
            f"detections {self.detections}",
            f"true_positives {self.true_positives}",
            f"false_positives {self.false_positives}",
            f"iou_threshold {self.iou_threshold:.6f}",
            f"detection_rate {self.detection_rate:.6f}",
            f"false_positives_per_image {self.false_positives_per_image:.6f}",
            f"precision {self.precision:.6f}",
            f"recall {self.recall:.6f}",
        ]
        for match in self.per_image:
            lines.append(
                f"image {match.image_path} {match.ground_truth} {match.true_positives} {match.false_positives}")
        return "\n".join(lines) + "\n"

    def to_dict(self) -> Dict:
        return {
            "detection_rate": self.detection_rate,
            "false_positives_per_image": self.false_positives_per_image,
            "precision": self.precision,
            "recall": self.recall,
            "iou_threshold": self.iou_threshold,
            "images": self.images,
            "ground_truth": self.ground_truth,
            "detections": self.detections,
            "true_positives": self.true_positives,
            "false_positives": self.false_positives,
        }
