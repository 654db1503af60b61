# ridge-varpro
# 多项式 ridge 近似：Grassmann 流形上的变量投影 Gauss-Newton 拟合与数值实验
