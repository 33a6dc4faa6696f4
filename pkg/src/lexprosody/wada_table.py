"""WADA-SNR lookup table (generated by scripts/build_wada_table.py).

G_TABLE[i] is log E|z| - E log|z| for gamma(0.4) speech in Gaussian
noise at DB_TABLE[i] dB.
"""
DB_TABLE = tuple(range(-20, 101))

G_TABLE = (
    0.409434700096, 0.409459495111, 0.409497615914, 0.409555846208,
    0.409644124773, 0.409776796419, 0.409974217321, 0.410264732143,
    0.410686991882, 0.411292510536, 0.412148269347, 0.413339080453,
    0.414969335243, 0.417163709488, 0.420066400568, 0.423838549371,
    0.428653656357, 0.434691027397, 0.442127552404, 0.451128386167,
    0.461837316823, 0.474367727023, 0.488795044921, 0.505151439977,
    0.523423264340, 0.543551425010, 0.565434568479, 0.588934749734,
    0.613885195053, 0.640099818102, 0.667384154692, 0.695547137715,
    0.724412576921, 0.753828572768, 0.783672840574, 0.813852431270,
    0.844297599247, 0.874951137171, 0.905755733221, 0.936642333729,
    0.967522021463, 0.998282817270, 1.028791524727, 1.058899667807,
    1.088451950650, 1.117295530737, 1.145288635195, 1.172307497847,
    1.198251093236, 1.223043580074, 1.246634682549, 1.268998421423,
    1.290130675592, 1.310046039628, 1.328774376713, 1.346357377082,
    1.362845339699, 1.378294311805, 1.392763653337, 1.406314042538,
    1.419005904390, 1.430898222094, 1.442047680827, 1.452508089484,
    1.462330027540, 1.471560668680, 1.480243738841, 1.488419572894,
    1.496125240630, 1.503394718603, 1.510259089612, 1.516746755982,
    1.522883656466, 1.528693479500, 1.534197867858, 1.539416611539,
    1.544367827041, 1.549068122191, 1.553532746380, 1.557775726570,
    1.561809989739, 1.565647472653, 1.569299219934, 1.572775471454,
    1.576085740082, 1.579238880747, 1.582243151760, 1.585106269245,
    1.587835455468, 1.590437481772, 1.592918706764, 1.595285110319,
    1.597542323915, 1.599695657735, 1.601750124942, 1.603710463471,
    1.605581155633, 1.607366445804, 1.609070356426, 1.610696702527,
    1.612249104927, 1.613731002284, 1.615145662121, 1.616496190941,
    1.617785543533, 1.619016531558, 1.620191831490, 1.621313991978,
    1.622385440688, 1.623408490682, 1.624385346362, 1.625318109040,
    1.626208782151, 1.627059276149, 1.627871413107, 1.628646931055,
    1.629387488060, 1.630094666087, 1.630769974642, 1.631414854220,
    1.632030679571,
)

G_GAUSSIAN = 0.409390070086
G_GAMMA = 1.645093812711
