"""判别器损失：Bradley–Terry 成对损失与 GAN 式二分类交叉熵。"""

from __future__ import annotations

from enum import StrEnum

import numpy as np

from ..autodiff.engine import Node, concat, constant, log_sigmoid, mean
from ..errors import InputError
from ..student.video import Source, VideoBatch
from .model import Discriminator, Params


class DiscLoss(StrEnum):
    BT = "bt"
    GAN = "gan"


def bt_loss_from_logits(d_teacher: Node, d_student: Node) -> Node:
    """mean −log σ(D_T − D_S)。"""

    if d_teacher.shape != d_student.shape or d_teacher.value.size == 0:
        raise InputError(f"BT 成对 logit 形状不一致或为空: {d_teacher.shape} vs {d_student.shape}")
    return -mean(log_sigmoid(d_teacher - d_student))


def bce_with_logits(logits: Node, labels: np.ndarray) -> Node:
    """mean −[y·log σ(z) + (1−y)·log σ(−z)]。"""

    labels = np.asarray(labels, dtype=np.float64)
    if labels.shape != logits.shape:
        raise InputError(f"标签形状 {labels.shape} 与 logit {logits.shape} 不符")
    pos = constant(labels) * log_sigmoid(logits)
    neg = constant(1.0 - labels) * log_sigmoid(-logits)
    return -mean(pos + neg)


def _check_pairs(teacher: VideoBatch, student: VideoBatch) -> None:
    teacher.require(Source.TEACHER, "判别器损失")
    student.require(Source.STUDENT, "判别器损失")
    if len(teacher) == 0:
        raise InputError("判别器损失: 空 batch")
    if teacher.prompt_ids.shape != student.prompt_ids.shape or np.any(teacher.prompt_ids != student.prompt_ids):
        raise InputError("BT 成对样本的 prompt 不一致")


def bt_loss(disc: Discriminator, teacher: VideoBatch, student: VideoBatch, p: Params = None) -> Node:
    _check_pairs(teacher, student)
    return bt_loss_from_logits(disc.score(teacher, p), disc.score(student, p))


def gan_loss(disc: Discriminator, teacher: VideoBatch, student: VideoBatch, p: Params = None) -> Node:
    """教师标 1、学生标 0 的二分类交叉熵。"""

    _check_pairs(teacher, student)
    logits = concat([disc.score(teacher, p), disc.score(student, p)], axis=0)
    labels = np.concatenate([np.ones(len(teacher)), np.zeros(len(student))])
    return bce_with_logits(logits, labels)


def disc_loss(
    kind: DiscLoss, disc: Discriminator, teacher: VideoBatch, student: VideoBatch, p: Params = None
) -> Node:
    if kind is DiscLoss.GAN:
        return gan_loss(disc, teacher, student, p)
    return bt_loss(disc, teacher, student, p)
