"""afd-lab：黑盒教师下的对抗式流蒸馏（AFD）桌面实验室。

职责：
- autodiff：最小反向自动微分引擎 + AdamW
- flow / student / teachers：前向加噪、因果自回归学生、只暴露采样通道的黑盒教师
- discriminator / afd / baselines：BT 判别器、NFT 目标、SFT/GAN/score-free DMD 对照组
- trainer / eval / cli：训练编排、指标与解析 oracle、命令行入口
"""

__version__ = "0.1.0"
