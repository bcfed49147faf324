// Generated by scripts/gen_unicode_data.py (Unicode 13.0.0). Do not edit.
#pragma once

#include <cstdint>

namespace halknob::unicode_data {

struct DecompEntry { char32_t cp; uint32_t offset; uint8_t len; };
struct CccEntry { char32_t cp; uint8_t ccc; };
struct CompEntry { char32_t first; char32_t second; char32_t composed; };
struct MapEntry { char32_t cp; char32_t to; };
struct Range { char32_t lo; char32_t hi; };

inline constexpr DecompEntry kDecompIndex[] = {
    {0x00C0,0,2}, {0x00C1,2,2}, {0x00C2,4,2}, {0x00C3,6,2}, {0x00C4,8,2}, {0x00C5,10,2},
    {0x00C7,12,2}, {0x00C8,14,2}, {0x00C9,16,2}, {0x00CA,18,2}, {0x00CB,20,2}, {0x00CC,22,2},
    {0x00CD,24,2}, {0x00CE,26,2}, {0x00CF,28,2}, {0x00D1,30,2}, {0x00D2,32,2}, {0x00D3,34,2},
    {0x00D4,36,2}, {0x00D5,38,2}, {0x00D6,40,2}, {0x00D9,42,2}, {0x00DA,44,2}, {0x00DB,46,2},
    {0x00DC,48,2}, {0x00DD,50,2}, {0x00E0,52,2}, {0x00E1,54,2}, {0x00E2,56,2}, {0x00E3,58,2},
    {0x00E4,60,2}, {0x00E5,62,2}, {0x00E7,64,2}, {0x00E8,66,2}, {0x00E9,68,2}, {0x00EA,70,2},
    {0x00EB,72,2}, {0x00EC,74,2}, {0x00ED,76,2}, {0x00EE,78,2}, {0x00EF,80,2}, {0x00F1,82,2},
    {0x00F2,84,2}, {0x00F3,86,2}, {0x00F4,88,2}, {0x00F5,90,2}, {0x00F6,92,2}, {0x00F9,94,2},
    {0x00FA,96,2}, {0x00FB,98,2}, {0x00FC,100,2}, {0x00FD,102,2}, {0x00FF,104,2}, {0x0100,106,2},
    {0x0101,108,2}, {0x0102,110,2}, {0x0103,112,2}, {0x0104,114,2}, {0x0105,116,2}, {0x0106,118,2},
    {0x0107,120,2}, {0x0108,122,2}, {0x0109,124,2}, {0x010A,126,2}, {0x010B,128,2}, {0x010C,130,2},
    {0x010D,132,2}, {0x010E,134,2}, {0x010F,136,2}, {0x0112,138,2}, {0x0113,140,2}, {0x0114,142,2},
    {0x0115,144,2}, {0x0116,146,2}, {0x0117,148,2}, {0x0118,150,2}, {0x0119,152,2}, {0x011A,154,2},
    {0x011B,156,2}, {0x011C,158,2}, {0x011D,160,2}, {0x011E,162,2}, {0x011F,164,2}, {0x0120,166,2},
    {0x0121,168,2}, {0x0122,170,2}, {0x0123,172,2}, {0x0124,174,2}, {0x0125,176,2}, {0x0128,178,2},
    {0x0129,180,2}, {0x012A,182,2}, {0x012B,184,2}, {0x012C,186,2}, {0x012D,188,2}, {0x012E,190,2},
    {0x012F,192,2}, {0x0130,194,2}, {0x0134,196,2}, {0x0135,198,2}, {0x0136,200,2}, {0x0137,202,2},
    {0x0139,204,2}, {0x013A,206,2}, {0x013B,208,2}, {0x013C,210,2}, {0x013D,212,2}, {0x013E,214,2},
    {0x0143,216,2}, {0x0144,218,2}, {0x0145,220,2}, {0x0146,222,2}, {0x0147,224,2}, {0x0148,226,2},
    {0x014C,228,2}, {0x014D,230,2}, {0x014E,232,2}, {0x014F,234,2}, {0x0150,236,2}, {0x0151,238,2},
    {0x0154,240,2}, {0x0155,242,2}, {0x0156,244,2}, {0x0157,246,2}, {0x0158,248,2}, {0x0159,250,2},
    {0x015A,252,2}, {0x015B,254,2}, {0x015C,256,2}, {0x015D,258,2}, {0x015E,260,2}, {0x015F,262,2},
    {0x0160,264,2}, {0x0161,266,2}, {0x0162,268,2}, {0x0163,270,2}, {0x0164,272,2}, {0x0165,274,2},
    {0x0168,276,2}, {0x0169,278,2}, {0x016A,280,2}, {0x016B,282,2}, {0x016C,284,2}, {0x016D,286,2},
    {0x016E,288,2}, {0x016F,290,2}, {0x0170,292,2}, {0x0171,294,2}, {0x0172,296,2}, {0x0173,298,2},
    {0x0174,300,2}, {0x0175,302,2}, {0x0176,304,2}, {0x0177,306,2}, {0x0178,308,2}, {0x0179,310,2},
    {0x017A,312,2}, {0x017B,314,2}, {0x017C,316,2}, {0x017D,318,2}, {0x017E,320,2}, {0x01A0,322,2},
    {0x01A1,324,2}, {0x01AF,326,2}, {0x01B0,328,2}, {0x01CD,330,2}, {0x01CE,332,2}, {0x01CF,334,2},
    {0x01D0,336,2}, {0x01D1,338,2}, {0x01D2,340,2}, {0x01D3,342,2}, {0x01D4,344,2}, {0x01D5,346,3},
    {0x01D6,349,3}, {0x01D7,352,3}, {0x01D8,355,3}, {0x01D9,358,3}, {0x01DA,361,3}, {0x01DB,364,3},
    {0x01DC,367,3}, {0x01DE,370,3}, {0x01DF,373,3}, {0x01E0,376,3}, {0x01E1,379,3}, {0x01E2,382,2},
    {0x01E3,384,2}, {0x01E6,386,2}, {0x01E7,388,2}, {0x01E8,390,2}, {0x01E9,392,2}, {0x01EA,394,2},
    {0x01EB,396,2}, {0x01EC,398,3}, {0x01ED,401,3}, {0x01EE,404,2}, {0x01EF,406,2}, {0x01F0,408,2},
    {0x01F4,410,2}, {0x01F5,412,2}, {0x01F8,414,2}, {0x01F9,416,2}, {0x01FA,418,3}, {0x01FB,421,3},
    {0x01FC,424,2}, {0x01FD,426,2}, {0x01FE,428,2}, {0x01FF,430,2}, {0x0200,432,2}, {0x0201,434,2},
    {0x0202,436,2}, {0x0203,438,2}, {0x0204,440,2}, {0x0205,442,2}, {0x0206,444,2}, {0x0207,446,2},
    {0x0208,448,2}, {0x0209,450,2}, {0x020A,452,2}, {0x020B,454,2}, {0x020C,456,2}, {0x020D,458,2},
    {0x020E,460,2}, {0x020F,462,2}, {0x0210,464,2}, {0x0211,466,2}, {0x0212,468,2}, {0x0213,470,2},
    {0x0214,472,2}, {0x0215,474,2}, {0x0216,476,2}, {0x0217,478,2}, {0x0218,480,2}, {0x0219,482,2},
    {0x021A,484,2}, {0x021B,486,2}, {0x021E,488,2}, {0x021F,490,2}, {0x0226,492,2}, {0x0227,494,2},
    {0x0228,496,2}, {0x0229,498,2}, {0x022A,500,3}, {0x022B,503,3}, {0x022C,506,3}, {0x022D,509,3},
    {0x022E,512,2}, {0x022F,514,2}, {0x0230,516,3}, {0x0231,519,3}, {0x0232,522,2}, {0x0233,524,2},
    {0x0340,526,1}, {0x0341,527,1}, {0x0343,528,1}, {0x0344,529,2}, {0x0374,531,1}, {0x037E,532,1},
    {0x0385,533,2}, {0x0386,535,2}, {0x0387,537,1}, {0x0388,538,2}, {0x0389,540,2}, {0x038A,542,2},
    {0x038C,544,2}, {0x038E,546,2}, {0x038F,548,2}, {0x0390,550,3}, {0x03AA,553,2}, {0x03AB,555,2},
    {0x03AC,557,2}, {0x03AD,559,2}, {0x03AE,561,2}, {0x03AF,563,2}, {0x03B0,565,3}, {0x03CA,568,2},
    {0x03CB,570,2}, {0x03CC,572,2}, {0x03CD,574,2}, {0x03CE,576,2}, {0x03D3,578,2}, {0x03D4,580,2},
    {0x0400,582,2}, {0x0401,584,2}, {0x0403,586,2}, {0x0407,588,2}, {0x040C,590,2}, {0x040D,592,2},
    {0x040E,594,2}, {0x0419,596,2}, {0x0439,598,2}, {0x0450,600,2}, {0x0451,602,2}, {0x0453,604,2},
    {0x0457,606,2}, {0x045C,608,2}, {0x045D,610,2}, {0x045E,612,2}, {0x0476,614,2}, {0x0477,616,2},
    {0x04C1,618,2}, {0x04C2,620,2}, {0x04D0,622,2}, {0x04D1,624,2}, {0x04D2,626,2}, {0x04D3,628,2},
    {0x04D6,630,2}, {0x04D7,632,2}, {0x04DA,634,2}, {0x04DB,636,2}, {0x04DC,638,2}, {0x04DD,640,2},
    {0x04DE,642,2}, {0x04DF,644,2}, {0x04E2,646,2}, {0x04E3,648,2}, {0x04E4,650,2}, {0x04E5,652,2},
    {0x04E6,654,2}, {0x04E7,656,2}, {0x04EA,658,2}, {0x04EB,660,2}, {0x04EC,662,2}, {0x04ED,664,2},
    {0x04EE,666,2}, {0x04EF,668,2}, {0x04F0,670,2}, {0x04F1,672,2}, {0x04F2,674,2}, {0x04F3,676,2},
    {0x04F4,678,2}, {0x04F5,680,2}, {0x04F8,682,2}, {0x04F9,684,2}, {0x0622,686,2}, {0x0623,688,2},
    {0x0624,690,2}, {0x0625,692,2}, {0x0626,694,2}, {0x06C0,696,2}, {0x06C2,698,2}, {0x06D3,700,2},
    {0x0929,702,2}, {0x0931,704,2}, {0x0934,706,2}, {0x0958,708,2}, {0x0959,710,2}, {0x095A,712,2},
    {0x095B,714,2}, {0x095C,716,2}, {0x095D,718,2}, {0x095E,720,2}, {0x095F,722,2}, {0x09CB,724,2},
    {0x09CC,726,2}, {0x09DC,728,2}, {0x09DD,730,2}, {0x09DF,732,2}, {0x0A33,734,2}, {0x0A36,736,2},
    {0x0A59,738,2}, {0x0A5A,740,2}, {0x0A5B,742,2}, {0x0A5E,744,2}, {0x0B48,746,2}, {0x0B4B,748,2},
    {0x0B4C,750,2}, {0x0B5C,752,2}, {0x0B5D,754,2}, {0x0B94,756,2}, {0x0BCA,758,2}, {0x0BCB,760,2},
    {0x0BCC,762,2}, {0x0C48,764,2}, {0x0CC0,766,2}, {0x0CC7,768,2}, {0x0CC8,770,2}, {0x0CCA,772,2},
    {0x0CCB,774,3}, {0x0D4A,777,2}, {0x0D4B,779,2}, {0x0D4C,781,2}, {0x0DDA,783,2}, {0x0DDC,785,2},
    {0x0DDD,787,3}, {0x0DDE,790,2}, {0x0F43,792,2}, {0x0F4D,794,2}, {0x0F52,796,2}, {0x0F57,798,2},
    {0x0F5C,800,2}, {0x0F69,802,2}, {0x0F73,804,2}, {0x0F75,806,2}, {0x0F76,808,2}, {0x0F78,810,2},
    {0x0F81,812,2}, {0x0F93,814,2}, {0x0F9D,816,2}, {0x0FA2,818,2}, {0x0FA7,820,2}, {0x0FAC,822,2},
    {0x0FB9,824,2}, {0x1026,826,2}, {0x1B06,828,2}, {0x1B08,830,2}, {0x1B0A,832,2}, {0x1B0C,834,2},
    {0x1B0E,836,2}, {0x1B12,838,2}, {0x1B3B,840,2}, {0x1B3D,842,2}, {0x1B40,844,2}, {0x1B41,846,2},
    {0x1B43,848,2}, {0x1E00,850,2}, {0x1E01,852,2}, {0x1E02,854,2}, {0x1E03,856,2}, {0x1E04,858,2},
    {0x1E05,860,2}, {0x1E06,862,2}, {0x1E07,864,2}, {0x1E08,866,3}, {0x1E09,869,3}, {0x1E0A,872,2},
    {0x1E0B,874,2}, {0x1E0C,876,2}, {0x1E0D,878,2}, {0x1E0E,880,2}, {0x1E0F,882,2}, {0x1E10,884,2},
    {0x1E11,886,2}, {0x1E12,888,2}, {0x1E13,890,2}, {0x1E14,892,3}, {0x1E15,895,3}, {0x1E16,898,3},
    {0x1E17,901,3}, {0x1E18,904,2}, {0x1E19,906,2}, {0x1E1A,908,2}, {0x1E1B,910,2}, {0x1E1C,912,3},
    {0x1E1D,915,3}, {0x1E1E,918,2}, {0x1E1F,920,2}, {0x1E20,922,2}, {0x1E21,924,2}, {0x1E22,926,2},
    {0x1E23,928,2}, {0x1E24,930,2}, {0x1E25,932,2}, {0x1E26,934,2}, {0x1E27,936,2}, {0x1E28,938,2},
    {0x1E29,940,2}, {0x1E2A,942,2}, {0x1E2B,944,2}, {0x1E2C,946,2}, {0x1E2D,948,2}, {0x1E2E,950,3},
    {0x1E2F,953,3}, {0x1E30,956,2}, {0x1E31,958,2}, {0x1E32,960,2}, {0x1E33,962,2}, {0x1E34,964,2},
    {0x1E35,966,2}, {0x1E36,968,2}, {0x1E37,970,2}, {0x1E38,972,3}, {0x1E39,975,3}, {0x1E3A,978,2},
    {0x1E3B,980,2}, {0x1E3C,982,2}, {0x1E3D,984,2}, {0x1E3E,986,2}, {0x1E3F,988,2}, {0x1E40,990,2},
    {0x1E41,992,2}, {0x1E42,994,2}, {0x1E43,996,2}, {0x1E44,998,2}, {0x1E45,1000,2}, {0x1E46,1002,2},
    {0x1E47,1004,2}, {0x1E48,1006,2}, {0x1E49,1008,2}, {0x1E4A,1010,2}, {0x1E4B,1012,2}, {0x1E4C,1014,3},
    {0x1E4D,1017,3}, {0x1E4E,1020,3}, {0x1E4F,1023,3}, {0x1E50,1026,3}, {0x1E51,1029,3}, {0x1E52,1032,3},
    {0x1E53,1035,3}, {0x1E54,1038,2}, {0x1E55,1040,2}, {0x1E56,1042,2}, {0x1E57,1044,2}, {0x1E58,1046,2},
    {0x1E59,1048,2}, {0x1E5A,1050,2}, {0x1E5B,1052,2}, {0x1E5C,1054,3}, {0x1E5D,1057,3}, {0x1E5E,1060,2},
    {0x1E5F,1062,2}, {0x1E60,1064,2}, {0x1E61,1066,2}, {0x1E62,1068,2}, {0x1E63,1070,2}, {0x1E64,1072,3},
    {0x1E65,1075,3}, {0x1E66,1078,3}, {0x1E67,1081,3}, {0x1E68,1084,3}, {0x1E69,1087,3}, {0x1E6A,1090,2},
    {0x1E6B,1092,2}, {0x1E6C,1094,2}, {0x1E6D,1096,2}, {0x1E6E,1098,2}, {0x1E6F,1100,2}, {0x1E70,1102,2},
    {0x1E71,1104,2}, {0x1E72,1106,2}, {0x1E73,1108,2}, {0x1E74,1110,2}, {0x1E75,1112,2}, {0x1E76,1114,2},
    {0x1E77,1116,2}, {0x1E78,1118,3}, {0x1E79,1121,3}, {0x1E7A,1124,3}, {0x1E7B,1127,3}, {0x1E7C,1130,2},
    {0x1E7D,1132,2}, {0x1E7E,1134,2}, {0x1E7F,1136,2}, {0x1E80,1138,2}, {0x1E81,1140,2}, {0x1E82,1142,2},
    {0x1E83,1144,2}, {0x1E84,1146,2}, {0x1E85,1148,2}, {0x1E86,1150,2}, {0x1E87,1152,2}, {0x1E88,1154,2},
    {0x1E89,1156,2}, {0x1E8A,1158,2}, {0x1E8B,1160,2}, {0x1E8C,1162,2}, {0x1E8D,1164,2}, {0x1E8E,1166,2},
    {0x1E8F,1168,2}, {0x1E90,1170,2}, {0x1E91,1172,2}, {0x1E92,1174,2}, {0x1E93,1176,2}, {0x1E94,1178,2},
    {0x1E95,1180,2}, {0x1E96,1182,2}, {0x1E97,1184,2}, {0x1E98,1186,2}, {0x1E99,1188,2}, {0x1E9B,1190,2},
    {0x1EA0,1192,2}, {0x1EA1,1194,2}, {0x1EA2,1196,2}, {0x1EA3,1198,2}, {0x1EA4,1200,3}, {0x1EA5,1203,3},
    {0x1EA6,1206,3}, {0x1EA7,1209,3}, {0x1EA8,1212,3}, {0x1EA9,1215,3}, {0x1EAA,1218,3}, {0x1EAB,1221,3},
    {0x1EAC,1224,3}, {0x1EAD,1227,3}, {0x1EAE,1230,3}, {0x1EAF,1233,3}, {0x1EB0,1236,3}, {0x1EB1,1239,3},
    {0x1EB2,1242,3}, {0x1EB3,1245,3}, {0x1EB4,1248,3}, {0x1EB5,1251,3}, {0x1EB6,1254,3}, {0x1EB7,1257,3},
    {0x1EB8,1260,2}, {0x1EB9,1262,2}, {0x1EBA,1264,2}, {0x1EBB,1266,2}, {0x1EBC,1268,2}, {0x1EBD,1270,2},
    {0x1EBE,1272,3}, {0x1EBF,1275,3}, {0x1EC0,1278,3}, {0x1EC1,1281,3}, {0x1EC2,1284,3}, {0x1EC3,1287,3},
    {0x1EC4,1290,3}, {0x1EC5,1293,3}, {0x1EC6,1296,3}, {0x1EC7,1299,3}, {0x1EC8,1302,2}, {0x1EC9,1304,2},
    {0x1ECA,1306,2}, {0x1ECB,1308,2}, {0x1ECC,1310,2}, {0x1ECD,1312,2}, {0x1ECE,1314,2}, {0x1ECF,1316,2},
    {0x1ED0,1318,3}, {0x1ED1,1321,3}, {0x1ED2,1324,3}, {0x1ED3,1327,3}, {0x1ED4,1330,3}, {0x1ED5,1333,3},
    {0x1ED6,1336,3}, {0x1ED7,1339,3}, {0x1ED8,1342,3}, {0x1ED9,1345,3}, {0x1EDA,1348,3}, {0x1EDB,1351,3},
    {0x1EDC,1354,3}, {0x1EDD,1357,3}, {0x1EDE,1360,3}, {0x1EDF,1363,3}, {0x1EE0,1366,3}, {0x1EE1,1369,3},
    {0x1EE2,1372,3}, {0x1EE3,1375,3}, {0x1EE4,1378,2}, {0x1EE5,1380,2}, {0x1EE6,1382,2}, {0x1EE7,1384,2},
    {0x1EE8,1386,3}, {0x1EE9,1389,3}, {0x1EEA,1392,3}, {0x1EEB,1395,3}, {0x1EEC,1398,3}, {0x1EED,1401,3},
    {0x1EEE,1404,3}, {0x1EEF,1407,3}, {0x1EF0,1410,3}, {0x1EF1,1413,3}, {0x1EF2,1416,2}, {0x1EF3,1418,2},
    {0x1EF4,1420,2}, {0x1EF5,1422,2}, {0x1EF6,1424,2}, {0x1EF7,1426,2}, {0x1EF8,1428,2}, {0x1EF9,1430,2},
    {0x1F00,1432,2}, {0x1F01,1434,2}, {0x1F02,1436,3}, {0x1F03,1439,3}, {0x1F04,1442,3}, {0x1F05,1445,3},
    {0x1F06,1448,3}, {0x1F07,1451,3}, {0x1F08,1454,2}, {0x1F09,1456,2}, {0x1F0A,1458,3}, {0x1F0B,1461,3},
    {0x1F0C,1464,3}, {0x1F0D,1467,3}, {0x1F0E,1470,3}, {0x1F0F,1473,3}, {0x1F10,1476,2}, {0x1F11,1478,2},
    {0x1F12,1480,3}, {0x1F13,1483,3}, {0x1F14,1486,3}, {0x1F15,1489,3}, {0x1F18,1492,2}, {0x1F19,1494,2},
    {0x1F1A,1496,3}, {0x1F1B,1499,3}, {0x1F1C,1502,3}, {0x1F1D,1505,3}, {0x1F20,1508,2}, {0x1F21,1510,2},
    {0x1F22,1512,3}, {0x1F23,1515,3}, {0x1F24,1518,3}, {0x1F25,1521,3}, {0x1F26,1524,3}, {0x1F27,1527,3},
    {0x1F28,1530,2}, {0x1F29,1532,2}, {0x1F2A,1534,3}, {0x1F2B,1537,3}, {0x1F2C,1540,3}, {0x1F2D,1543,3},
    {0x1F2E,1546,3}, {0x1F2F,1549,3}, {0x1F30,1552,2}, {0x1F31,1554,2}, {0x1F32,1556,3}, {0x1F33,1559,3},
    {0x1F34,1562,3}, {0x1F35,1565,3}, {0x1F36,1568,3}, {0x1F37,1571,3}, {0x1F38,1574,2}, {0x1F39,1576,2},
    {0x1F3A,1578,3}, {0x1F3B,1581,3}, {0x1F3C,1584,3}, {0x1F3D,1587,3}, {0x1F3E,1590,3}, {0x1F3F,1593,3},
    {0x1F40,1596,2}, {0x1F41,1598,2}, {0x1F42,1600,3}, {0x1F43,1603,3}, {0x1F44,1606,3}, {0x1F45,1609,3},
    {0x1F48,1612,2}, {0x1F49,1614,2}, {0x1F4A,1616,3}, {0x1F4B,1619,3}, {0x1F4C,1622,3}, {0x1F4D,1625,3},
    {0x1F50,1628,2}, {0x1F51,1630,2}, {0x1F52,1632,3}, {0x1F53,1635,3}, {0x1F54,1638,3}, {0x1F55,1641,3},
    {0x1F56,1644,3}, {0x1F57,1647,3}, {0x1F59,1650,2}, {0x1F5B,1652,3}, {0x1F5D,1655,3}, {0x1F5F,1658,3},
    {0x1F60,1661,2}, {0x1F61,1663,2}, {0x1F62,1665,3}, {0x1F63,1668,3}, {0x1F64,1671,3}, {0x1F65,1674,3},
    {0x1F66,1677,3}, {0x1F67,1680,3}, {0x1F68,1683,2}, {0x1F69,1685,2}, {0x1F6A,1687,3}, {0x1F6B,1690,3},
    {0x1F6C,1693,3}, {0x1F6D,1696,3}, {0x1F6E,1699,3}, {0x1F6F,1702,3}, {0x1F70,1705,2}, {0x1F71,1707,2},
    {0x1F72,1709,2}, {0x1F73,1711,2}, {0x1F74,1713,2}, {0x1F75,1715,2}, {0x1F76,1717,2}, {0x1F77,1719,2},
    {0x1F78,1721,2}, {0x1F79,1723,2}, {0x1F7A,1725,2}, {0x1F7B,1727,2}, {0x1F7C,1729,2}, {0x1F7D,1731,2},
    {0x1F80,1733,3}, {0x1F81,1736,3}, {0x1F82,1739,4}, {0x1F83,1743,4}, {0x1F84,1747,4}, {0x1F85,1751,4},
    {0x1F86,1755,4}, {0x1F87,1759,4}, {0x1F88,1763,3}, {0x1F89,1766,3}, {0x1F8A,1769,4}, {0x1F8B,1773,4},
    {0x1F8C,1777,4}, {0x1F8D,1781,4}, {0x1F8E,1785,4}, {0x1F8F,1789,4}, {0x1F90,1793,3}, {0x1F91,1796,3},
    {0x1F92,1799,4}, {0x1F93,1803,4}, {0x1F94,1807,4}, {0x1F95,1811,4}, {0x1F96,1815,4}, {0x1F97,1819,4},
    {0x1F98,1823,3}, {0x1F99,1826,3}, {0x1F9A,1829,4}, {0x1F9B,1833,4}, {0x1F9C,1837,4}, {0x1F9D,1841,4},
    {0x1F9E,1845,4}, {0x1F9F,1849,4}, {0x1FA0,1853,3}, {0x1FA1,1856,3}, {0x1FA2,1859,4}, {0x1FA3,1863,4},
    {0x1FA4,1867,4}, {0x1FA5,1871,4}, {0x1FA6,1875,4}, {0x1FA7,1879,4}, {0x1FA8,1883,3}, {0x1FA9,1886,3},
    {0x1FAA,1889,4}, {0x1FAB,1893,4}, {0x1FAC,1897,4}, {0x1FAD,1901,4}, {0x1FAE,1905,4}, {0x1FAF,1909,4},
    {0x1FB0,1913,2}, {0x1FB1,1915,2}, {0x1FB2,1917,3}, {0x1FB3,1920,2}, {0x1FB4,1922,3}, {0x1FB6,1925,2},
    {0x1FB7,1927,3}, {0x1FB8,1930,2}, {0x1FB9,1932,2}, {0x1FBA,1934,2}, {0x1FBB,1936,2}, {0x1FBC,1938,2},
    {0x1FBE,1940,1}, {0x1FC1,1941,2}, {0x1FC2,1943,3}, {0x1FC3,1946,2}, {0x1FC4,1948,3}, {0x1FC6,1951,2},
    {0x1FC7,1953,3}, {0x1FC8,1956,2}, {0x1FC9,1958,2}, {0x1FCA,1960,2}, {0x1FCB,1962,2}, {0x1FCC,1964,2},
    {0x1FCD,1966,2}, {0x1FCE,1968,2}, {0x1FCF,1970,2}, {0x1FD0,1972,2}, {0x1FD1,1974,2}, {0x1FD2,1976,3},
    {0x1FD3,1979,3}, {0x1FD6,1982,2}, {0x1FD7,1984,3}, {0x1FD8,1987,2}, {0x1FD9,1989,2}, {0x1FDA,1991,2},
    {0x1FDB,1993,2}, {0x1FDD,1995,2}, {0x1FDE,1997,2}, {0x1FDF,1999,2}, {0x1FE0,2001,2}, {0x1FE1,2003,2},
    {0x1FE2,2005,3}, {0x1FE3,2008,3}, {0x1FE4,2011,2}, {0x1FE5,2013,2}, {0x1FE6,2015,2}, {0x1FE7,2017,3},
    {0x1FE8,2020,2}, {0x1FE9,2022,2}, {0x1FEA,2024,2}, {0x1FEB,2026,2}, {0x1FEC,2028,2}, {0x1FED,2030,2},
    {0x1FEE,2032,2}, {0x1FEF,2034,1}, {0x1FF2,2035,3}, {0x1FF3,2038,2}, {0x1FF4,2040,3}, {0x1FF6,2043,2},
    {0x1FF7,2045,3}, {0x1FF8,2048,2}, {0x1FF9,2050,2}, {0x1FFA,2052,2}, {0x1FFB,2054,2}, {0x1FFC,2056,2},
    {0x1FFD,2058,1}, {0x2000,2059,1}, {0x2001,2060,1}, {0x2126,2061,1}, {0x212A,2062,1}, {0x212B,2063,2},
    {0x219A,2065,2}, {0x219B,2067,2}, {0x21AE,2069,2}, {0x21CD,2071,2}, {0x21CE,2073,2}, {0x21CF,2075,2},
    {0x2204,2077,2}, {0x2209,2079,2}, {0x220C,2081,2}, {0x2224,2083,2}, {0x2226,2085,2}, {0x2241,2087,2},
    {0x2244,2089,2}, {0x2247,2091,2}, {0x2249,2093,2}, {0x2260,2095,2}, {0x2262,2097,2}, {0x226D,2099,2},
    {0x226E,2101,2}, {0x226F,2103,2}, {0x2270,2105,2}, {0x2271,2107,2}, {0x2274,2109,2}, {0x2275,2111,2},
    {0x2278,2113,2}, {0x2279,2115,2}, {0x2280,2117,2}, {0x2281,2119,2}, {0x2284,2121,2}, {0x2285,2123,2},
    {0x2288,2125,2}, {0x2289,2127,2}, {0x22AC,2129,2}, {0x22AD,2131,2}, {0x22AE,2133,2}, {0x22AF,2135,2},
    {0x22E0,2137,2}, {0x22E1,2139,2}, {0x22E2,2141,2}, {0x22E3,2143,2}, {0x22EA,2145,2}, {0x22EB,2147,2},
    {0x22EC,2149,2}, {0x22ED,2151,2}, {0x2329,2153,1}, {0x232A,2154,1}, {0x2ADC,2155,2}, {0x304C,2157,2},
    {0x304E,2159,2}, {0x3050,2161,2}, {0x3052,2163,2}, {0x3054,2165,2}, {0x3056,2167,2}, {0x3058,2169,2},
    {0x305A,2171,2}, {0x305C,2173,2}, {0x305E,2175,2}, {0x3060,2177,2}, {0x3062,2179,2}, {0x3065,2181,2},
    {0x3067,2183,2}, {0x3069,2185,2}, {0x3070,2187,2}, {0x3071,2189,2}, {0x3073,2191,2}, {0x3074,2193,2},
    {0x3076,2195,2}, {0x3077,2197,2}, {0x3079,2199,2}, {0x307A,2201,2}, {0x307C,2203,2}, {0x307D,2205,2},
    {0x3094,2207,2}, {0x309E,2209,2}, {0x30AC,2211,2}, {0x30AE,2213,2}, {0x30B0,2215,2}, {0x30B2,2217,2},
    {0x30B4,2219,2}, {0x30B6,2221,2}, {0x30B8,2223,2}, {0x30BA,2225,2}, {0x30BC,2227,2}, {0x30BE,2229,2},
    {0x30C0,2231,2}, {0x30C2,2233,2}, {0x30C5,2235,2}, {0x30C7,2237,2}, {0x30C9,2239,2}, {0x30D0,2241,2},
    {0x30D1,2243,2}, {0x30D3,2245,2}, {0x30D4,2247,2}, {0x30D6,2249,2}, {0x30D7,2251,2}, {0x30D9,2253,2},
    {0x30DA,2255,2}, {0x30DC,2257,2}, {0x30DD,2259,2}, {0x30F4,2261,2}, {0x30F7,2263,2}, {0x30F8,2265,2},
    {0x30F9,2267,2}, {0x30FA,2269,2}, {0x30FE,2271,2}, {0xF900,2273,1}, {0xF901,2274,1}, {0xF902,2275,1},
    {0xF903,2276,1}, {0xF904,2277,1}, {0xF905,2278,1}, {0xF906,2279,1}, {0xF907,2280,1}, {0xF908,2281,1},
    {0xF909,2282,1}, {0xF90A,2283,1}, {0xF90B,2284,1}, {0xF90C,2285,1}, {0xF90D,2286,1}, {0xF90E,2287,1},
    {0xF90F,2288,1}, {0xF910,2289,1}, {0xF911,2290,1}, {0xF912,2291,1}, {0xF913,2292,1}, {0xF914,2293,1},
    {0xF915,2294,1}, {0xF916,2295,1}, {0xF917,2296,1}, {0xF918,2297,1}, {0xF919,2298,1}, {0xF91A,2299,1},
    {0xF91B,2300,1}, {0xF91C,2301,1}, {0xF91D,2302,1}, {0xF91E,2303,1}, {0xF91F,2304,1}, {0xF920,2305,1},
    {0xF921,2306,1}, {0xF922,2307,1}, {0xF923,2308,1}, {0xF924,2309,1}, {0xF925,2310,1}, {0xF926,2311,1},
    {0xF927,2312,1}, {0xF928,2313,1}, {0xF929,2314,1}, {0xF92A,2315,1}, {0xF92B,2316,1}, {0xF92C,2317,1},
    {0xF92D,2318,1}, {0xF92E,2319,1}, {0xF92F,2320,1}, {0xF930,2321,1}, {0xF931,2322,1}, {0xF932,2323,1},
    {0xF933,2324,1}, {0xF934,2325,1}, {0xF935,2326,1}, {0xF936,2327,1}, {0xF937,2328,1}, {0xF938,2329,1},
    {0xF939,2330,1}, {0xF93A,2331,1}, {0xF93B,2332,1}, {0xF93C,2333,1}, {0xF93D,2334,1}, {0xF93E,2335,1},
    {0xF93F,2336,1}, {0xF940,2337,1}, {0xF941,2338,1}, {0xF942,2339,1}, {0xF943,2340,1}, {0xF944,2341,1},
    {0xF945,2342,1}, {0xF946,2343,1}, {0xF947,2344,1}, {0xF948,2345,1}, {0xF949,2346,1}, {0xF94A,2347,1},
    {0xF94B,2348,1}, {0xF94C,2349,1}, {0xF94D,2350,1}, {0xF94E,2351,1}, {0xF94F,2352,1}, {0xF950,2353,1},
    {0xF951,2354,1}, {0xF952,2355,1}, {0xF953,2356,1}, {0xF954,2357,1}, {0xF955,2358,1}, {0xF956,2359,1},
    {0xF957,2360,1}, {0xF958,2361,1}, {0xF959,2362,1}, {0xF95A,2363,1}, {0xF95B,2364,1}, {0xF95C,2365,1},
    {0xF95D,2366,1}, {0xF95E,2367,1}, {0xF95F,2368,1}, {0xF960,2369,1}, {0xF961,2370,1}, {0xF962,2371,1},
    {0xF963,2372,1}, {0xF964,2373,1}, {0xF965,2374,1}, {0xF966,2375,1}, {0xF967,2376,1}, {0xF968,2377,1},
    {0xF969,2378,1}, {0xF96A,2379,1}, {0xF96B,2380,1}, {0xF96C,2381,1}, {0xF96D,2382,1}, {0xF96E,2383,1},
    {0xF96F,2384,1}, {0xF970,2385,1}, {0xF971,2386,1}, {0xF972,2387,1}, {0xF973,2388,1}, {0xF974,2389,1},
    {0xF975,2390,1}, {0xF976,2391,1}, {0xF977,2392,1}, {0xF978,2393,1}, {0xF979,2394,1}, {0xF97A,2395,1},
    {0xF97B,2396,1}, {0xF97C,2397,1}, {0xF97D,2398,1}, {0xF97E,2399,1}, {0xF97F,2400,1}, {0xF980,2401,1},
    {0xF981,2402,1}, {0xF982,2403,1}, {0xF983,2404,1}, {0xF984,2405,1}, {0xF985,2406,1}, {0xF986,2407,1},
    {0xF987,2408,1}, {0xF988,2409,1}, {0xF989,2410,1}, {0xF98A,2411,1}, {0xF98B,2412,1}, {0xF98C,2413,1},
    {0xF98D,2414,1}, {0xF98E,2415,1}, {0xF98F,2416,1}, {0xF990,2417,1}, {0xF991,2418,1}, {0xF992,2419,1},
    {0xF993,2420,1}, {0xF994,2421,1}, {0xF995,2422,1}, {0xF996,2423,1}, {0xF997,2424,1}, {0xF998,2425,1},
    {0xF999,2426,1}, {0xF99A,2427,1}, {0xF99B,2428,1}, {0xF99C,2429,1}, {0xF99D,2430,1}, {0xF99E,2431,1},
    {0xF99F,2432,1}, {0xF9A0,2433,1}, {0xF9A1,2434,1}, {0xF9A2,2435,1}, {0xF9A3,2436,1}, {0xF9A4,2437,1},
    {0xF9A5,2438,1}, {0xF9A6,2439,1}, {0xF9A7,2440,1}, {0xF9A8,2441,1}, {0xF9A9,2442,1}, {0xF9AA,2443,1},
    {0xF9AB,2444,1}, {0xF9AC,2445,1}, {0xF9AD,2446,1}, {0xF9AE,2447,1}, {0xF9AF,2448,1}, {0xF9B0,2449,1},
    {0xF9B1,2450,1}, {0xF9B2,2451,1}, {0xF9B3,2452,1}, {0xF9B4,2453,1}, {0xF9B5,2454,1}, {0xF9B6,2455,1},
    {0xF9B7,2456,1}, {0xF9B8,2457,1}, {0xF9B9,2458,1}, {0xF9BA,2459,1}, {0xF9BB,2460,1}, {0xF9BC,2461,1},
    {0xF9BD,2462,1}, {0xF9BE,2463,1}, {0xF9BF,2464,1}, {0xF9C0,2465,1}, {0xF9C1,2466,1}, {0xF9C2,2467,1},
    {0xF9C3,2468,1}, {0xF9C4,2469,1}, {0xF9C5,2470,1}, {0xF9C6,2471,1}, {0xF9C7,2472,1}, {0xF9C8,2473,1},
    {0xF9C9,2474,1}, {0xF9CA,2475,1}, {0xF9CB,2476,1}, {0xF9CC,2477,1}, {0xF9CD,2478,1}, {0xF9CE,2479,1},
    {0xF9CF,2480,1}, {0xF9D0,2481,1}, {0xF9D1,2482,1}, {0xF9D2,2483,1}, {0xF9D3,2484,1}, {0xF9D4,2485,1},
    {0xF9D5,2486,1}, {0xF9D6,2487,1}, {0xF9D7,2488,1}, {0xF9D8,2489,1}, {0xF9D9,2490,1}, {0xF9DA,2491,1},
    {0xF9DB,2492,1}, {0xF9DC,2493,1}, {0xF9DD,2494,1}, {0xF9DE,2495,1}, {0xF9DF,2496,1}, {0xF9E0,2497,1},
    {0xF9E1,2498,1}, {0xF9E2,2499,1}, {0xF9E3,2500,1}, {0xF9E4,2501,1}, {0xF9E5,2502,1}, {0xF9E6,2503,1},
    {0xF9E7,2504,1}, {0xF9E8,2505,1}, {0xF9E9,2506,1}, {0xF9EA,2507,1}, {0xF9EB,2508,1}, {0xF9EC,2509,1},
    {0xF9ED,2510,1}, {0xF9EE,2511,1}, {0xF9EF,2512,1}, {0xF9F0,2513,1}, {0xF9F1,2514,1}, {0xF9F2,2515,1},
    {0xF9F3,2516,1}, {0xF9F4,2517,1}, {0xF9F5,2518,1}, {0xF9F6,2519,1}, {0xF9F7,2520,1}, {0xF9F8,2521,1},
    {0xF9F9,2522,1}, {0xF9FA,2523,1}, {0xF9FB,2524,1}, {0xF9FC,2525,1}, {0xF9FD,2526,1}, {0xF9FE,2527,1},
    {0xF9FF,2528,1}, {0xFA00,2529,1}, {0xFA01,2530,1}, {0xFA02,2531,1}, {0xFA03,2532,1}, {0xFA04,2533,1},
    {0xFA05,2534,1}, {0xFA06,2535,1}, {0xFA07,2536,1}, {0xFA08,2537,1}, {0xFA09,2538,1}, {0xFA0A,2539,1},
    {0xFA0B,2540,1}, {0xFA0C,2541,1}, {0xFA0D,2542,1}, {0xFA10,2543,1}, {0xFA12,2544,1}, {0xFA15,2545,1},
    {0xFA16,2546,1}, {0xFA17,2547,1}, {0xFA18,2548,1}, {0xFA19,2549,1}, {0xFA1A,2550,1}, {0xFA1B,2551,1},
    {0xFA1C,2552,1}, {0xFA1D,2553,1}, {0xFA1E,2554,1}, {0xFA20,2555,1}, {0xFA22,2556,1}, {0xFA25,2557,1},
    {0xFA26,2558,1}, {0xFA2A,2559,1}, {0xFA2B,2560,1}, {0xFA2C,2561,1}, {0xFA2D,2562,1}, {0xFA2E,2563,1},
    {0xFA2F,2564,1}, {0xFA30,2565,1}, {0xFA31,2566,1}, {0xFA32,2567,1}, {0xFA33,2568,1}, {0xFA34,2569,1},
    {0xFA35,2570,1}, {0xFA36,2571,1}, {0xFA37,2572,1}, {0xFA38,2573,1}, {0xFA39,2574,1}, {0xFA3A,2575,1},
    {0xFA3B,2576,1}, {0xFA3C,2577,1}, {0xFA3D,2578,1}, {0xFA3E,2579,1}, {0xFA3F,2580,1}, {0xFA40,2581,1},
    {0xFA41,2582,1}, {0xFA42,2583,1}, {0xFA43,2584,1}, {0xFA44,2585,1}, {0xFA45,2586,1}, {0xFA46,2587,1},
    {0xFA47,2588,1}, {0xFA48,2589,1}, {0xFA49,2590,1}, {0xFA4A,2591,1}, {0xFA4B,2592,1}, {0xFA4C,2593,1},
    {0xFA4D,2594,1}, {0xFA4E,2595,1}, {0xFA4F,2596,1}, {0xFA50,2597,1}, {0xFA51,2598,1}, {0xFA52,2599,1},
    {0xFA53,2600,1}, {0xFA54,2601,1}, {0xFA55,2602,1}, {0xFA56,2603,1}, {0xFA57,2604,1}, {0xFA58,2605,1},
    {0xFA59,2606,1}, {0xFA5A,2607,1}, {0xFA5B,2608,1}, {0xFA5C,2609,1}, {0xFA5D,2610,1}, {0xFA5E,2611,1},
    {0xFA5F,2612,1}, {0xFA60,2613,1}, {0xFA61,2614,1}, {0xFA62,2615,1}, {0xFA63,2616,1}, {0xFA64,2617,1},
    {0xFA65,2618,1}, {0xFA66,2619,1}, {0xFA67,2620,1}, {0xFA68,2621,1}, {0xFA69,2622,1}, {0xFA6A,2623,1},
    {0xFA6B,2624,1}, {0xFA6C,2625,1}, {0xFA6D,2626,1}, {0xFA70,2627,1}, {0xFA71,2628,1}, {0xFA72,2629,1},
    {0xFA73,2630,1}, {0xFA74,2631,1}, {0xFA75,2632,1}, {0xFA76,2633,1}, {0xFA77,2634,1}, {0xFA78,2635,1},
    {0xFA79,2636,1}, {0xFA7A,2637,1}, {0xFA7B,2638,1}, {0xFA7C,2639,1}, {0xFA7D,2640,1}, {0xFA7E,2641,1},
    {0xFA7F,2642,1}, {0xFA80,2643,1}, {0xFA81,2644,1}, {0xFA82,2645,1}, {0xFA83,2646,1}, {0xFA84,2647,1},
    {0xFA85,2648,1}, {0xFA86,2649,1}, {0xFA87,2650,1}, {0xFA88,2651,1}, {0xFA89,2652,1}, {0xFA8A,2653,1},
    {0xFA8B,2654,1}, {0xFA8C,2655,1}, {0xFA8D,2656,1}, {0xFA8E,2657,1}, {0xFA8F,2658,1}, {0xFA90,2659,1},
    {0xFA91,2660,1}, {0xFA92,2661,1}, {0xFA93,2662,1}, {0xFA94,2663,1}, {0xFA95,2664,1}, {0xFA96,2665,1},
    {0xFA97,2666,1}, {0xFA98,2667,1}, {0xFA99,2668,1}, {0xFA9A,2669,1}, {0xFA9B,2670,1}, {0xFA9C,2671,1},
    {0xFA9D,2672,1}, {0xFA9E,2673,1}, {0xFA9F,2674,1}, {0xFAA0,2675,1}, {0xFAA1,2676,1}, {0xFAA2,2677,1},
    {0xFAA3,2678,1}, {0xFAA4,2679,1}, {0xFAA5,2680,1}, {0xFAA6,2681,1}, {0xFAA7,2682,1}, {0xFAA8,2683,1},
    {0xFAA9,2684,1}, {0xFAAA,2685,1}, {0xFAAB,2686,1}, {0xFAAC,2687,1}, {0xFAAD,2688,1}, {0xFAAE,2689,1},
    {0xFAAF,2690,1}, {0xFAB0,2691,1}, {0xFAB1,2692,1}, {0xFAB2,2693,1}, {0xFAB3,2694,1}, {0xFAB4,2695,1},
    {0xFAB5,2696,1}, {0xFAB6,2697,1}, {0xFAB7,2698,1}, {0xFAB8,2699,1}, {0xFAB9,2700,1}, {0xFABA,2701,1},
    {0xFABB,2702,1}, {0xFABC,2703,1}, {0xFABD,2704,1}, {0xFABE,2705,1}, {0xFABF,2706,1}, {0xFAC0,2707,1},
    {0xFAC1,2708,1}, {0xFAC2,2709,1}, {0xFAC3,2710,1}, {0xFAC4,2711,1}, {0xFAC5,2712,1}, {0xFAC6,2713,1},
    {0xFAC7,2714,1}, {0xFAC8,2715,1}, {0xFAC9,2716,1}, {0xFACA,2717,1}, {0xFACB,2718,1}, {0xFACC,2719,1},
    {0xFACD,2720,1}, {0xFACE,2721,1}, {0xFACF,2722,1}, {0xFAD0,2723,1}, {0xFAD1,2724,1}, {0xFAD2,2725,1},
    {0xFAD3,2726,1}, {0xFAD4,2727,1}, {0xFAD5,2728,1}, {0xFAD6,2729,1}, {0xFAD7,2730,1}, {0xFAD8,2731,1},
    {0xFAD9,2732,1}, {0xFB1D,2733,2}, {0xFB1F,2735,2}, {0xFB2A,2737,2}, {0xFB2B,2739,2}, {0xFB2C,2741,3},
    {0xFB2D,2744,3}, {0xFB2E,2747,2}, {0xFB2F,2749,2}, {0xFB30,2751,2}, {0xFB31,2753,2}, {0xFB32,2755,2},
    {0xFB33,2757,2}, {0xFB34,2759,2}, {0xFB35,2761,2}, {0xFB36,2763,2}, {0xFB38,2765,2}, {0xFB39,2767,2},
    {0xFB3A,2769,2}, {0xFB3B,2771,2}, {0xFB3C,2773,2}, {0xFB3E,2775,2}, {0xFB40,2777,2}, {0xFB41,2779,2},
    {0xFB43,2781,2}, {0xFB44,2783,2}, {0xFB46,2785,2}, {0xFB47,2787,2}, {0xFB48,2789,2}, {0xFB49,2791,2},
    {0xFB4A,2793,2}, {0xFB4B,2795,2}, {0xFB4C,2797,2}, {0xFB4D,2799,2}, {0xFB4E,2801,2},
};
inline constexpr uint32_t kDecompIndex_size = 1493;

inline constexpr char32_t kDecompPool[] = {
    0x0041, 0x0300, 0x0041, 0x0301, 0x0041, 0x0302,
    0x0041, 0x0303, 0x0041, 0x0308, 0x0041, 0x030A,
    0x0043, 0x0327, 0x0045, 0x0300, 0x0045, 0x0301,
    0x0045, 0x0302, 0x0045, 0x0308, 0x0049, 0x0300,
    0x0049, 0x0301, 0x0049, 0x0302, 0x0049, 0x0308,
    0x004E, 0x0303, 0x004F, 0x0300, 0x004F, 0x0301,
    0x004F, 0x0302, 0x004F, 0x0303, 0x004F, 0x0308,
    0x0055, 0x0300, 0x0055, 0x0301, 0x0055, 0x0302,
    0x0055, 0x0308, 0x0059, 0x0301, 0x0061, 0x0300,
    0x0061, 0x0301, 0x0061, 0x0302, 0x0061, 0x0303,
    0x0061, 0x0308, 0x0061, 0x030A, 0x0063, 0x0327,
    0x0065, 0x0300, 0x0065, 0x0301, 0x0065, 0x0302,
    0x0065, 0x0308, 0x0069, 0x0300, 0x0069, 0x0301,
    0x0069, 0x0302, 0x0069, 0x0308, 0x006E, 0x0303,
    0x006F, 0x0300, 0x006F, 0x0301, 0x006F, 0x0302,
    0x006F, 0x0303, 0x006F, 0x0308, 0x0075, 0x0300,
    0x0075, 0x0301, 0x0075, 0x0302, 0x0075, 0x0308,
    0x0079, 0x0301, 0x0079, 0x0308, 0x0041, 0x0304,
    0x0061, 0x0304, 0x0041, 0x0306, 0x0061, 0x0306,
    0x0041, 0x0328, 0x0061, 0x0328, 0x0043, 0x0301,
    0x0063, 0x0301, 0x0043, 0x0302, 0x0063, 0x0302,
    0x0043, 0x0307, 0x0063, 0x0307, 0x0043, 0x030C,
    0x0063, 0x030C, 0x0044, 0x030C, 0x0064, 0x030C,
    0x0045, 0x0304, 0x0065, 0x0304, 0x0045, 0x0306,
    0x0065, 0x0306, 0x0045, 0x0307, 0x0065, 0x0307,
    0x0045, 0x0328, 0x0065, 0x0328, 0x0045, 0x030C,
    0x0065, 0x030C, 0x0047, 0x0302, 0x0067, 0x0302,
    0x0047, 0x0306, 0x0067, 0x0306, 0x0047, 0x0307,
    0x0067, 0x0307, 0x0047, 0x0327, 0x0067, 0x0327,
    0x0048, 0x0302, 0x0068, 0x0302, 0x0049, 0x0303,
    0x0069, 0x0303, 0x0049, 0x0304, 0x0069, 0x0304,
    0x0049, 0x0306, 0x0069, 0x0306, 0x0049, 0x0328,
    0x0069, 0x0328, 0x0049, 0x0307, 0x004A, 0x0302,
    0x006A, 0x0302, 0x004B, 0x0327, 0x006B, 0x0327,
    0x004C, 0x0301, 0x006C, 0x0301, 0x004C, 0x0327,
    0x006C, 0x0327, 0x004C, 0x030C, 0x006C, 0x030C,
    0x004E, 0x0301, 0x006E, 0x0301, 0x004E, 0x0327,
    0x006E, 0x0327, 0x004E, 0x030C, 0x006E, 0x030C,
    0x004F, 0x0304, 0x006F, 0x0304, 0x004F, 0x0306,
    0x006F, 0x0306, 0x004F, 0x030B, 0x006F, 0x030B,
    0x0052, 0x0301, 0x0072, 0x0301, 0x0052, 0x0327,
    0x0072, 0x0327, 0x0052, 0x030C, 0x0072, 0x030C,
    0x0053, 0x0301, 0x0073, 0x0301, 0x0053, 0x0302,
    0x0073, 0x0302, 0x0053, 0x0327, 0x0073, 0x0327,
    0x0053, 0x030C, 0x0073, 0x030C, 0x0054, 0x0327,
    0x0074, 0x0327, 0x0054, 0x030C, 0x0074, 0x030C,
    0x0055, 0x0303, 0x0075, 0x0303, 0x0055, 0x0304,
    0x0075, 0x0304, 0x0055, 0x0306, 0x0075, 0x0306,
    0x0055, 0x030A, 0x0075, 0x030A, 0x0055, 0x030B,
    0x0075, 0x030B, 0x0055, 0x0328, 0x0075, 0x0328,
    0x0057, 0x0302, 0x0077, 0x0302, 0x0059, 0x0302,
    0x0079, 0x0302, 0x0059, 0x0308, 0x005A, 0x0301,
    0x007A, 0x0301, 0x005A, 0x0307, 0x007A, 0x0307,
    0x005A, 0x030C, 0x007A, 0x030C, 0x004F, 0x031B,
    0x006F, 0x031B, 0x0055, 0x031B, 0x0075, 0x031B,
    0x0041, 0x030C, 0x0061, 0x030C, 0x0049, 0x030C,
    0x0069, 0x030C, 0x004F, 0x030C, 0x006F, 0x030C,
    0x0055, 0x030C, 0x0075, 0x030C, 0x0055, 0x0308,
    0x0304, 0x0075, 0x0308, 0x0304, 0x0055, 0x0308,
    0x0301, 0x0075, 0x0308, 0x0301, 0x0055, 0x0308,
    0x030C, 0x0075, 0x0308, 0x030C, 0x0055, 0x0308,
    0x0300, 0x0075, 0x0308, 0x0300, 0x0041, 0x0308,
    0x0304, 0x0061, 0x0308, 0x0304, 0x0041, 0x0307,
    0x0304, 0x0061, 0x0307, 0x0304, 0x00C6, 0x0304,
    0x00E6, 0x0304, 0x0047, 0x030C, 0x0067, 0x030C,
    0x004B, 0x030C, 0x006B, 0x030C, 0x004F, 0x0328,
    0x006F, 0x0328, 0x004F, 0x0328, 0x0304, 0x006F,
    0x0328, 0x0304, 0x01B7, 0x030C, 0x0292, 0x030C,
    0x006A, 0x030C, 0x0047, 0x0301, 0x0067, 0x0301,
    0x004E, 0x0300, 0x006E, 0x0300, 0x0041, 0x030A,
    0x0301, 0x0061, 0x030A, 0x0301, 0x00C6, 0x0301,
    0x00E6, 0x0301, 0x00D8, 0x0301, 0x00F8, 0x0301,
    0x0041, 0x030F, 0x0061, 0x030F, 0x0041, 0x0311,
    0x0061, 0x0311, 0x0045, 0x030F, 0x0065, 0x030F,
    0x0045, 0x0311, 0x0065, 0x0311, 0x0049, 0x030F,
    0x0069, 0x030F, 0x0049, 0x0311, 0x0069, 0x0311,
    0x004F, 0x030F, 0x006F, 0x030F, 0x004F, 0x0311,
    0x006F, 0x0311, 0x0052, 0x030F, 0x0072, 0x030F,
    0x0052, 0x0311, 0x0072, 0x0311, 0x0055, 0x030F,
    0x0075, 0x030F, 0x0055, 0x0311, 0x0075, 0x0311,
    0x0053, 0x0326, 0x0073, 0x0326, 0x0054, 0x0326,
    0x0074, 0x0326, 0x0048, 0x030C, 0x0068, 0x030C,
    0x0041, 0x0307, 0x0061, 0x0307, 0x0045, 0x0327,
    0x0065, 0x0327, 0x004F, 0x0308, 0x0304, 0x006F,
    0x0308, 0x0304, 0x004F, 0x0303, 0x0304, 0x006F,
    0x0303, 0x0304, 0x004F, 0x0307, 0x006F, 0x0307,
    0x004F, 0x0307, 0x0304, 0x006F, 0x0307, 0x0304,
    0x0059, 0x0304, 0x0079, 0x0304, 0x0300, 0x0301,
    0x0313, 0x0308, 0x0301, 0x02B9, 0x003B, 0x00A8,
    0x0301, 0x0391, 0x0301, 0x00B7, 0x0395, 0x0301,
    0x0397, 0x0301, 0x0399, 0x0301, 0x039F, 0x0301,
    0x03A5, 0x0301, 0x03A9, 0x0301, 0x03B9, 0x0308,
    0x0301, 0x0399, 0x0308, 0x03A5, 0x0308, 0x03B1,
    0x0301, 0x03B5, 0x0301, 0x03B7, 0x0301, 0x03B9,
    0x0301, 0x03C5, 0x0308, 0x0301, 0x03B9, 0x0308,
    0x03C5, 0x0308, 0x03BF, 0x0301, 0x03C5, 0x0301,
    0x03C9, 0x0301, 0x03D2, 0x0301, 0x03D2, 0x0308,
    0x0415, 0x0300, 0x0415, 0x0308, 0x0413, 0x0301,
    0x0406, 0x0308, 0x041A, 0x0301, 0x0418, 0x0300,
    0x0423, 0x0306, 0x0418, 0x0306, 0x0438, 0x0306,
    0x0435, 0x0300, 0x0435, 0x0308, 0x0433, 0x0301,
    0x0456, 0x0308, 0x043A, 0x0301, 0x0438, 0x0300,
    0x0443, 0x0306, 0x0474, 0x030F, 0x0475, 0x030F,
    0x0416, 0x0306, 0x0436, 0x0306, 0x0410, 0x0306,
    0x0430, 0x0306, 0x0410, 0x0308, 0x0430, 0x0308,
    0x0415, 0x0306, 0x0435, 0x0306, 0x04D8, 0x0308,
    0x04D9, 0x0308, 0x0416, 0x0308, 0x0436, 0x0308,
    0x0417, 0x0308, 0x0437, 0x0308, 0x0418, 0x0304,
    0x0438, 0x0304, 0x0418, 0x0308, 0x0438, 0x0308,
    0x041E, 0x0308, 0x043E, 0x0308, 0x04E8, 0x0308,
    0x04E9, 0x0308, 0x042D, 0x0308, 0x044D, 0x0308,
    0x0423, 0x0304, 0x0443, 0x0304, 0x0423, 0x0308,
    0x0443, 0x0308, 0x0423, 0x030B, 0x0443, 0x030B,
    0x0427, 0x0308, 0x0447, 0x0308, 0x042B, 0x0308,
    0x044B, 0x0308, 0x0627, 0x0653, 0x0627, 0x0654,
    0x0648, 0x0654, 0x0627, 0x0655, 0x064A, 0x0654,
    0x06D5, 0x0654, 0x06C1, 0x0654, 0x06D2, 0x0654,
    0x0928, 0x093C, 0x0930, 0x093C, 0x0933, 0x093C,
    0x0915, 0x093C, 0x0916, 0x093C, 0x0917, 0x093C,
    0x091C, 0x093C, 0x0921, 0x093C, 0x0922, 0x093C,
    0x092B, 0x093C, 0x092F, 0x093C, 0x09C7, 0x09BE,
    0x09C7, 0x09D7, 0x09A1, 0x09BC, 0x09A2, 0x09BC,
    0x09AF, 0x09BC, 0x0A32, 0x0A3C, 0x0A38, 0x0A3C,
    0x0A16, 0x0A3C, 0x0A17, 0x0A3C, 0x0A1C, 0x0A3C,
    0x0A2B, 0x0A3C, 0x0B47, 0x0B56, 0x0B47, 0x0B3E,
    0x0B47, 0x0B57, 0x0B21, 0x0B3C, 0x0B22, 0x0B3C,
    0x0B92, 0x0BD7, 0x0BC6, 0x0BBE, 0x0BC7, 0x0BBE,
    0x0BC6, 0x0BD7, 0x0C46, 0x0C56, 0x0CBF, 0x0CD5,
    0x0CC6, 0x0CD5, 0x0CC6, 0x0CD6, 0x0CC6, 0x0CC2,
    0x0CC6, 0x0CC2, 0x0CD5, 0x0D46, 0x0D3E, 0x0D47,
    0x0D3E, 0x0D46, 0x0D57, 0x0DD9, 0x0DCA, 0x0DD9,
    0x0DCF, 0x0DD9, 0x0DCF, 0x0DCA, 0x0DD9, 0x0DDF,
    0x0F42, 0x0FB7, 0x0F4C, 0x0FB7, 0x0F51, 0x0FB7,
    0x0F56, 0x0FB7, 0x0F5B, 0x0FB7, 0x0F40, 0x0FB5,
    0x0F71, 0x0F72, 0x0F71, 0x0F74, 0x0FB2, 0x0F80,
    0x0FB3, 0x0F80, 0x0F71, 0x0F80, 0x0F92, 0x0FB7,
    0x0F9C, 0x0FB7, 0x0FA1, 0x0FB7, 0x0FA6, 0x0FB7,
    0x0FAB, 0x0FB7, 0x0F90, 0x0FB5, 0x1025, 0x102E,
    0x1B05, 0x1B35, 0x1B07, 0x1B35, 0x1B09, 0x1B35,
    0x1B0B, 0x1B35, 0x1B0D, 0x1B35, 0x1B11, 0x1B35,
    0x1B3A, 0x1B35, 0x1B3C, 0x1B35, 0x1B3E, 0x1B35,
    0x1B3F, 0x1B35, 0x1B42, 0x1B35, 0x0041, 0x0325,
    0x0061, 0x0325, 0x0042, 0x0307, 0x0062, 0x0307,
    0x0042, 0x0323, 0x0062, 0x0323, 0x0042, 0x0331,
    0x0062, 0x0331, 0x0043, 0x0327, 0x0301, 0x0063,
    0x0327, 0x0301, 0x0044, 0x0307, 0x0064, 0x0307,
    0x0044, 0x0323, 0x0064, 0x0323, 0x0044, 0x0331,
    0x0064, 0x0331, 0x0044, 0x0327, 0x0064, 0x0327,
    0x0044, 0x032D, 0x0064, 0x032D, 0x0045, 0x0304,
    0x0300, 0x0065, 0x0304, 0x0300, 0x0045, 0x0304,
    0x0301, 0x0065, 0x0304, 0x0301, 0x0045, 0x032D,
    0x0065, 0x032D, 0x0045, 0x0330, 0x0065, 0x0330,
    0x0045, 0x0327, 0x0306, 0x0065, 0x0327, 0x0306,
    0x0046, 0x0307, 0x0066, 0x0307, 0x0047, 0x0304,
    0x0067, 0x0304, 0x0048, 0x0307, 0x0068, 0x0307,
    0x0048, 0x0323, 0x0068, 0x0323, 0x0048, 0x0308,
    0x0068, 0x0308, 0x0048, 0x0327, 0x0068, 0x0327,
    0x0048, 0x032E, 0x0068, 0x032E, 0x0049, 0x0330,
    0x0069, 0x0330, 0x0049, 0x0308, 0x0301, 0x0069,
    0x0308, 0x0301, 0x004B, 0x0301, 0x006B, 0x0301,
    0x004B, 0x0323, 0x006B, 0x0323, 0x004B, 0x0331,
    0x006B, 0x0331, 0x004C, 0x0323, 0x006C, 0x0323,
    0x004C, 0x0323, 0x0304, 0x006C, 0x0323, 0x0304,
    0x004C, 0x0331, 0x006C, 0x0331, 0x004C, 0x032D,
    0x006C, 0x032D, 0x004D, 0x0301, 0x006D, 0x0301,
    0x004D, 0x0307, 0x006D, 0x0307, 0x004D, 0x0323,
    0x006D, 0x0323, 0x004E, 0x0307, 0x006E, 0x0307,
    0x004E, 0x0323, 0x006E, 0x0323, 0x004E, 0x0331,
    0x006E, 0x0331, 0x004E, 0x032D, 0x006E, 0x032D,
    0x004F, 0x0303, 0x0301, 0x006F, 0x0303, 0x0301,
    0x004F, 0x0303, 0x0308, 0x006F, 0x0303, 0x0308,
    0x004F, 0x0304, 0x0300, 0x006F, 0x0304, 0x0300,
    0x004F, 0x0304, 0x0301, 0x006F, 0x0304, 0x0301,
    0x0050, 0x0301, 0x0070, 0x0301, 0x0050, 0x0307,
    0x0070, 0x0307, 0x0052, 0x0307, 0x0072, 0x0307,
    0x0052, 0x0323, 0x0072, 0x0323, 0x0052, 0x0323,
    0x0304, 0x0072, 0x0323, 0x0304, 0x0052, 0x0331,
    0x0072, 0x0331, 0x0053, 0x0307, 0x0073, 0x0307,
    0x0053, 0x0323, 0x0073, 0x0323, 0x0053, 0x0301,
    0x0307, 0x0073, 0x0301, 0x0307, 0x0053, 0x030C,
    0x0307, 0x0073, 0x030C, 0x0307, 0x0053, 0x0323,
    0x0307, 0x0073, 0x0323, 0x0307, 0x0054, 0x0307,
    0x0074, 0x0307, 0x0054, 0x0323, 0x0074, 0x0323,
    0x0054, 0x0331, 0x0074, 0x0331, 0x0054, 0x032D,
    0x0074, 0x032D, 0x0055, 0x0324, 0x0075, 0x0324,
    0x0055, 0x0330, 0x0075, 0x0330, 0x0055, 0x032D,
    0x0075, 0x032D, 0x0055, 0x0303, 0x0301, 0x0075,
    0x0303, 0x0301, 0x0055, 0x0304, 0x0308, 0x0075,
    0x0304, 0x0308, 0x0056, 0x0303, 0x0076, 0x0303,
    0x0056, 0x0323, 0x0076, 0x0323, 0x0057, 0x0300,
    0x0077, 0x0300, 0x0057, 0x0301, 0x0077, 0x0301,
    0x0057, 0x0308, 0x0077, 0x0308, 0x0057, 0x0307,
    0x0077, 0x0307, 0x0057, 0x0323, 0x0077, 0x0323,
    0x0058, 0x0307, 0x0078, 0x0307, 0x0058, 0x0308,
    0x0078, 0x0308, 0x0059, 0x0307, 0x0079, 0x0307,
    0x005A, 0x0302, 0x007A, 0x0302, 0x005A, 0x0323,
    0x007A, 0x0323, 0x005A, 0x0331, 0x007A, 0x0331,
    0x0068, 0x0331, 0x0074, 0x0308, 0x0077, 0x030A,
    0x0079, 0x030A, 0x017F, 0x0307, 0x0041, 0x0323,
    0x0061, 0x0323, 0x0041, 0x0309, 0x0061, 0x0309,
    0x0041, 0x0302, 0x0301, 0x0061, 0x0302, 0x0301,
    0x0041, 0x0302, 0x0300, 0x0061, 0x0302, 0x0300,
    0x0041, 0x0302, 0x0309, 0x0061, 0x0302, 0x0309,
    0x0041, 0x0302, 0x0303, 0x0061, 0x0302, 0x0303,
    0x0041, 0x0323, 0x0302, 0x0061, 0x0323, 0x0302,
    0x0041, 0x0306, 0x0301, 0x0061, 0x0306, 0x0301,
    0x0041, 0x0306, 0x0300, 0x0061, 0x0306, 0x0300,
    0x0041, 0x0306, 0x0309, 0x0061, 0x0306, 0x0309,
    0x0041, 0x0306, 0x0303, 0x0061, 0x0306, 0x0303,
    0x0041, 0x0323, 0x0306, 0x0061, 0x0323, 0x0306,
    0x0045, 0x0323, 0x0065, 0x0323, 0x0045, 0x0309,
    0x0065, 0x0309, 0x0045, 0x0303, 0x0065, 0x0303,
    0x0045, 0x0302, 0x0301, 0x0065, 0x0302, 0x0301,
    0x0045, 0x0302, 0x0300, 0x0065, 0x0302, 0x0300,
    0x0045, 0x0302, 0x0309, 0x0065, 0x0302, 0x0309,
    0x0045, 0x0302, 0x0303, 0x0065, 0x0302, 0x0303,
    0x0045, 0x0323, 0x0302, 0x0065, 0x0323, 0x0302,
    0x0049, 0x0309, 0x0069, 0x0309, 0x0049, 0x0323,
    0x0069, 0x0323, 0x004F, 0x0323, 0x006F, 0x0323,
    0x004F, 0x0309, 0x006F, 0x0309, 0x004F, 0x0302,
    0x0301, 0x006F, 0x0302, 0x0301, 0x004F, 0x0302,
    0x0300, 0x006F, 0x0302, 0x0300, 0x004F, 0x0302,
    0x0309, 0x006F, 0x0302, 0x0309, 0x004F, 0x0302,
    0x0303, 0x006F, 0x0302, 0x0303, 0x004F, 0x0323,
    0x0302, 0x006F, 0x0323, 0x0302, 0x004F, 0x031B,
    0x0301, 0x006F, 0x031B, 0x0301, 0x004F, 0x031B,
    0x0300, 0x006F, 0x031B, 0x0300, 0x004F, 0x031B,
    0x0309, 0x006F, 0x031B, 0x0309, 0x004F, 0x031B,
    0x0303, 0x006F, 0x031B, 0x0303, 0x004F, 0x031B,
    0x0323, 0x006F, 0x031B, 0x0323, 0x0055, 0x0323,
    0x0075, 0x0323, 0x0055, 0x0309, 0x0075, 0x0309,
    0x0055, 0x031B, 0x0301, 0x0075, 0x031B, 0x0301,
    0x0055, 0x031B, 0x0300, 0x0075, 0x031B, 0x0300,
    0x0055, 0x031B, 0x0309, 0x0075, 0x031B, 0x0309,
    0x0055, 0x031B, 0x0303, 0x0075, 0x031B, 0x0303,
    0x0055, 0x031B, 0x0323, 0x0075, 0x031B, 0x0323,
    0x0059, 0x0300, 0x0079, 0x0300, 0x0059, 0x0323,
    0x0079, 0x0323, 0x0059, 0x0309, 0x0079, 0x0309,
    0x0059, 0x0303, 0x0079, 0x0303, 0x03B1, 0x0313,
    0x03B1, 0x0314, 0x03B1, 0x0313, 0x0300, 0x03B1,
    0x0314, 0x0300, 0x03B1, 0x0313, 0x0301, 0x03B1,
    0x0314, 0x0301, 0x03B1, 0x0313, 0x0342, 0x03B1,
    0x0314, 0x0342, 0x0391, 0x0313, 0x0391, 0x0314,
    0x0391, 0x0313, 0x0300, 0x0391, 0x0314, 0x0300,
    0x0391, 0x0313, 0x0301, 0x0391, 0x0314, 0x0301,
    0x0391, 0x0313, 0x0342, 0x0391, 0x0314, 0x0342,
    0x03B5, 0x0313, 0x03B5, 0x0314, 0x03B5, 0x0313,
    0x0300, 0x03B5, 0x0314, 0x0300, 0x03B5, 0x0313,
    0x0301, 0x03B5, 0x0314, 0x0301, 0x0395, 0x0313,
    0x0395, 0x0314, 0x0395, 0x0313, 0x0300, 0x0395,
    0x0314, 0x0300, 0x0395, 0x0313, 0x0301, 0x0395,
    0x0314, 0x0301, 0x03B7, 0x0313, 0x03B7, 0x0314,
    0x03B7, 0x0313, 0x0300, 0x03B7, 0x0314, 0x0300,
    0x03B7, 0x0313, 0x0301, 0x03B7, 0x0314, 0x0301,
    0x03B7, 0x0313, 0x0342, 0x03B7, 0x0314, 0x0342,
    0x0397, 0x0313, 0x0397, 0x0314, 0x0397, 0x0313,
    0x0300, 0x0397, 0x0314, 0x0300, 0x0397, 0x0313,
    0x0301, 0x0397, 0x0314, 0x0301, 0x0397, 0x0313,
    0x0342, 0x0397, 0x0314, 0x0342, 0x03B9, 0x0313,
    0x03B9, 0x0314, 0x03B9, 0x0313, 0x0300, 0x03B9,
    0x0314, 0x0300, 0x03B9, 0x0313, 0x0301, 0x03B9,
    0x0314, 0x0301, 0x03B9, 0x0313, 0x0342, 0x03B9,
    0x0314, 0x0342, 0x0399, 0x0313, 0x0399, 0x0314,
    0x0399, 0x0313, 0x0300, 0x0399, 0x0314, 0x0300,
    0x0399, 0x0313, 0x0301, 0x0399, 0x0314, 0x0301,
    0x0399, 0x0313, 0x0342, 0x0399, 0x0314, 0x0342,
    0x03BF, 0x0313, 0x03BF, 0x0314, 0x03BF, 0x0313,
    0x0300, 0x03BF, 0x0314, 0x0300, 0x03BF, 0x0313,
    0x0301, 0x03BF, 0x0314, 0x0301, 0x039F, 0x0313,
    0x039F, 0x0314, 0x039F, 0x0313, 0x0300, 0x039F,
    0x0314, 0x0300, 0x039F, 0x0313, 0x0301, 0x039F,
    0x0314, 0x0301, 0x03C5, 0x0313, 0x03C5, 0x0314,
    0x03C5, 0x0313, 0x0300, 0x03C5, 0x0314, 0x0300,
    0x03C5, 0x0313, 0x0301, 0x03C5, 0x0314, 0x0301,
    0x03C5, 0x0313, 0x0342, 0x03C5, 0x0314, 0x0342,
    0x03A5, 0x0314, 0x03A5, 0x0314, 0x0300, 0x03A5,
    0x0314, 0x0301, 0x03A5, 0x0314, 0x0342, 0x03C9,
    0x0313, 0x03C9, 0x0314, 0x03C9, 0x0313, 0x0300,
    0x03C9, 0x0314, 0x0300, 0x03C9, 0x0313, 0x0301,
    0x03C9, 0x0314, 0x0301, 0x03C9, 0x0313, 0x0342,
    0x03C9, 0x0314, 0x0342, 0x03A9, 0x0313, 0x03A9,
    0x0314, 0x03A9, 0x0313, 0x0300, 0x03A9, 0x0314,
    0x0300, 0x03A9, 0x0313, 0x0301, 0x03A9, 0x0314,
    0x0301, 0x03A9, 0x0313, 0x0342, 0x03A9, 0x0314,
    0x0342, 0x03B1, 0x0300, 0x03B1, 0x0301, 0x03B5,
    0x0300, 0x03B5, 0x0301, 0x03B7, 0x0300, 0x03B7,
    0x0301, 0x03B9, 0x0300, 0x03B9, 0x0301, 0x03BF,
    0x0300, 0x03BF, 0x0301, 0x03C5, 0x0300, 0x03C5,
    0x0301, 0x03C9, 0x0300, 0x03C9, 0x0301, 0x03B1,
    0x0313, 0x0345, 0x03B1, 0x0314, 0x0345, 0x03B1,
    0x0313, 0x0300, 0x0345, 0x03B1, 0x0314, 0x0300,
    0x0345, 0x03B1, 0x0313, 0x0301, 0x0345, 0x03B1,
    0x0314, 0x0301, 0x0345, 0x03B1, 0x0313, 0x0342,
    0x0345, 0x03B1, 0x0314, 0x0342, 0x0345, 0x0391,
    0x0313, 0x0345, 0x0391, 0x0314, 0x0345, 0x0391,
    0x0313, 0x0300, 0x0345, 0x0391, 0x0314, 0x0300,
    0x0345, 0x0391, 0x0313, 0x0301, 0x0345, 0x0391,
    0x0314, 0x0301, 0x0345, 0x0391, 0x0313, 0x0342,
    0x0345, 0x0391, 0x0314, 0x0342, 0x0345, 0x03B7,
    0x0313, 0x0345, 0x03B7, 0x0314, 0x0345, 0x03B7,
    0x0313, 0x0300, 0x0345, 0x03B7, 0x0314, 0x0300,
    0x0345, 0x03B7, 0x0313, 0x0301, 0x0345, 0x03B7,
    0x0314, 0x0301, 0x0345, 0x03B7, 0x0313, 0x0342,
    0x0345, 0x03B7, 0x0314, 0x0342, 0x0345, 0x0397,
    0x0313, 0x0345, 0x0397, 0x0314, 0x0345, 0x0397,
    0x0313, 0x0300, 0x0345, 0x0397, 0x0314, 0x0300,
    0x0345, 0x0397, 0x0313, 0x0301, 0x0345, 0x0397,
    0x0314, 0x0301, 0x0345, 0x0397, 0x0313, 0x0342,
    0x0345, 0x0397, 0x0314, 0x0342, 0x0345, 0x03C9,
    0x0313, 0x0345, 0x03C9, 0x0314, 0x0345, 0x03C9,
    0x0313, 0x0300, 0x0345, 0x03C9, 0x0314, 0x0300,
    0x0345, 0x03C9, 0x0313, 0x0301, 0x0345, 0x03C9,
    0x0314, 0x0301, 0x0345, 0x03C9, 0x0313, 0x0342,
    0x0345, 0x03C9, 0x0314, 0x0342, 0x0345, 0x03A9,
    0x0313, 0x0345, 0x03A9, 0x0314, 0x0345, 0x03A9,
    0x0313, 0x0300, 0x0345, 0x03A9, 0x0314, 0x0300,
    0x0345, 0x03A9, 0x0313, 0x0301, 0x0345, 0x03A9,
    0x0314, 0x0301, 0x0345, 0x03A9, 0x0313, 0x0342,
    0x0345, 0x03A9, 0x0314, 0x0342, 0x0345, 0x03B1,
    0x0306, 0x03B1, 0x0304, 0x03B1, 0x0300, 0x0345,
    0x03B1, 0x0345, 0x03B1, 0x0301, 0x0345, 0x03B1,
    0x0342, 0x03B1, 0x0342, 0x0345, 0x0391, 0x0306,
    0x0391, 0x0304, 0x0391, 0x0300, 0x0391, 0x0301,
    0x0391, 0x0345, 0x03B9, 0x00A8, 0x0342, 0x03B7,
    0x0300, 0x0345, 0x03B7, 0x0345, 0x03B7, 0x0301,
    0x0345, 0x03B7, 0x0342, 0x03B7, 0x0342, 0x0345,
    0x0395, 0x0300, 0x0395, 0x0301, 0x0397, 0x0300,
    0x0397, 0x0301, 0x0397, 0x0345, 0x1FBF, 0x0300,
    0x1FBF, 0x0301, 0x1FBF, 0x0342, 0x03B9, 0x0306,
    0x03B9, 0x0304, 0x03B9, 0x0308, 0x0300, 0x03B9,
    0x0308, 0x0301, 0x03B9, 0x0342, 0x03B9, 0x0308,
    0x0342, 0x0399, 0x0306, 0x0399, 0x0304, 0x0399,
    0x0300, 0x0399, 0x0301, 0x1FFE, 0x0300, 0x1FFE,
    0x0301, 0x1FFE, 0x0342, 0x03C5, 0x0306, 0x03C5,
    0x0304, 0x03C5, 0x0308, 0x0300, 0x03C5, 0x0308,
    0x0301, 0x03C1, 0x0313, 0x03C1, 0x0314, 0x03C5,
    0x0342, 0x03C5, 0x0308, 0x0342, 0x03A5, 0x0306,
    0x03A5, 0x0304, 0x03A5, 0x0300, 0x03A5, 0x0301,
    0x03A1, 0x0314, 0x00A8, 0x0300, 0x00A8, 0x0301,
    0x0060, 0x03C9, 0x0300, 0x0345, 0x03C9, 0x0345,
    0x03C9, 0x0301, 0x0345, 0x03C9, 0x0342, 0x03C9,
    0x0342, 0x0345, 0x039F, 0x0300, 0x039F, 0x0301,
    0x03A9, 0x0300, 0x03A9, 0x0301, 0x03A9, 0x0345,
    0x00B4, 0x2002, 0x2003, 0x03A9, 0x004B, 0x0041,
    0x030A, 0x2190, 0x0338, 0x2192, 0x0338, 0x2194,
    0x0338, 0x21D0, 0x0338, 0x21D4, 0x0338, 0x21D2,
    0x0338, 0x2203, 0x0338, 0x2208, 0x0338, 0x220B,
    0x0338, 0x2223, 0x0338, 0x2225, 0x0338, 0x223C,
    0x0338, 0x2243, 0x0338, 0x2245, 0x0338, 0x2248,
    0x0338, 0x003D, 0x0338, 0x2261, 0x0338, 0x224D,
    0x0338, 0x003C, 0x0338, 0x003E, 0x0338, 0x2264,
    0x0338, 0x2265, 0x0338, 0x2272, 0x0338, 0x2273,
    0x0338, 0x2276, 0x0338, 0x2277, 0x0338, 0x227A,
    0x0338, 0x227B, 0x0338, 0x2282, 0x0338, 0x2283,
    0x0338, 0x2286, 0x0338, 0x2287, 0x0338, 0x22A2,
    0x0338, 0x22A8, 0x0338, 0x22A9, 0x0338, 0x22AB,
    0x0338, 0x227C, 0x0338, 0x227D, 0x0338, 0x2291,
    0x0338, 0x2292, 0x0338, 0x22B2, 0x0338, 0x22B3,
    0x0338, 0x22B4, 0x0338, 0x22B5, 0x0338, 0x3008,
    0x3009, 0x2ADD, 0x0338, 0x304B, 0x3099, 0x304D,
    0x3099, 0x304F, 0x3099, 0x3051, 0x3099, 0x3053,
    0x3099, 0x3055, 0x3099, 0x3057, 0x3099, 0x3059,
    0x3099, 0x305B, 0x3099, 0x305D, 0x3099, 0x305F,
    0x3099, 0x3061, 0x3099, 0x3064, 0x3099, 0x3066,
    0x3099, 0x3068, 0x3099, 0x306F, 0x3099, 0x306F,
    0x309A, 0x3072, 0x3099, 0x3072, 0x309A, 0x3075,
    0x3099, 0x3075, 0x309A, 0x3078, 0x3099, 0x3078,
    0x309A, 0x307B, 0x3099, 0x307B, 0x309A, 0x3046,
    0x3099, 0x309D, 0x3099, 0x30AB, 0x3099, 0x30AD,
    0x3099, 0x30AF, 0x3099, 0x30B1, 0x3099, 0x30B3,
    0x3099, 0x30B5, 0x3099, 0x30B7, 0x3099, 0x30B9,
    0x3099, 0x30BB, 0x3099, 0x30BD, 0x3099, 0x30BF,
    0x3099, 0x30C1, 0x3099, 0x30C4, 0x3099, 0x30C6,
    0x3099, 0x30C8, 0x3099, 0x30CF, 0x3099, 0x30CF,
    0x309A, 0x30D2, 0x3099, 0x30D2, 0x309A, 0x30D5,
    0x3099, 0x30D5, 0x309A, 0x30D8, 0x3099, 0x30D8,
    0x309A, 0x30DB, 0x3099, 0x30DB, 0x309A, 0x30A6,
    0x3099, 0x30EF, 0x3099, 0x30F0, 0x3099, 0x30F1,
    0x3099, 0x30F2, 0x3099, 0x30FD, 0x3099, 0x8C48,
    0x66F4, 0x8ECA, 0x8CC8, 0x6ED1, 0x4E32, 0x53E5,
    0x9F9C, 0x9F9C, 0x5951, 0x91D1, 0x5587, 0x5948,
    0x61F6, 0x7669, 0x7F85, 0x863F, 0x87BA, 0x88F8,
    0x908F, 0x6A02, 0x6D1B, 0x70D9, 0x73DE, 0x843D,
    0x916A, 0x99F1, 0x4E82, 0x5375, 0x6B04, 0x721B,
    0x862D, 0x9E1E, 0x5D50, 0x6FEB, 0x85CD, 0x8964,
    0x62C9, 0x81D8, 0x881F, 0x5ECA, 0x6717, 0x6D6A,
    0x72FC, 0x90CE, 0x4F86, 0x51B7, 0x52DE, 0x64C4,
    0x6AD3, 0x7210, 0x76E7, 0x8001, 0x8606, 0x865C,
    0x8DEF, 0x9732, 0x9B6F, 0x9DFA, 0x788C, 0x797F,
    0x7DA0, 0x83C9, 0x9304, 0x9E7F, 0x8AD6, 0x58DF,
    0x5F04, 0x7C60, 0x807E, 0x7262, 0x78CA, 0x8CC2,
    0x96F7, 0x58D8, 0x5C62, 0x6A13, 0x6DDA, 0x6F0F,
    0x7D2F, 0x7E37, 0x964B, 0x52D2, 0x808B, 0x51DC,
    0x51CC, 0x7A1C, 0x7DBE, 0x83F1, 0x9675, 0x8B80,
    0x62CF, 0x6A02, 0x8AFE, 0x4E39, 0x5BE7, 0x6012,
    0x7387, 0x7570, 0x5317, 0x78FB, 0x4FBF, 0x5FA9,
    0x4E0D, 0x6CCC, 0x6578, 0x7D22, 0x53C3, 0x585E,
    0x7701, 0x8449, 0x8AAA, 0x6BBA, 0x8FB0, 0x6C88,
    0x62FE, 0x82E5, 0x63A0, 0x7565, 0x4EAE, 0x5169,
    0x51C9, 0x6881, 0x7CE7, 0x826F, 0x8AD2, 0x91CF,
    0x52F5, 0x5442, 0x5973, 0x5EEC, 0x65C5, 0x6FFE,
    0x792A, 0x95AD, 0x9A6A, 0x9E97, 0x9ECE, 0x529B,
    0x66C6, 0x6B77, 0x8F62, 0x5E74, 0x6190, 0x6200,
    0x649A, 0x6F23, 0x7149, 0x7489, 0x79CA, 0x7DF4,
    0x806F, 0x8F26, 0x84EE, 0x9023, 0x934A, 0x5217,
    0x52A3, 0x54BD, 0x70C8, 0x88C2, 0x8AAA, 0x5EC9,
    0x5FF5, 0x637B, 0x6BAE, 0x7C3E, 0x7375, 0x4EE4,
    0x56F9, 0x5BE7, 0x5DBA, 0x601C, 0x73B2, 0x7469,
    0x7F9A, 0x8046, 0x9234, 0x96F6, 0x9748, 0x9818,
    0x4F8B, 0x79AE, 0x91B4, 0x96B8, 0x60E1, 0x4E86,
    0x50DA, 0x5BEE, 0x5C3F, 0x6599, 0x6A02, 0x71CE,
    0x7642, 0x84FC, 0x907C, 0x9F8D, 0x6688, 0x962E,
    0x5289, 0x677B, 0x67F3, 0x6D41, 0x6E9C, 0x7409,
    0x7559, 0x786B, 0x7D10, 0x985E, 0x516D, 0x622E,
    0x9678, 0x502B, 0x5D19, 0x6DEA, 0x8F2A, 0x5F8B,
    0x6144, 0x6817, 0x7387, 0x9686, 0x5229, 0x540F,
    0x5C65, 0x6613, 0x674E, 0x68A8, 0x6CE5, 0x7406,
    0x75E2, 0x7F79, 0x88CF, 0x88E1, 0x91CC, 0x96E2,
    0x533F, 0x6EBA, 0x541D, 0x71D0, 0x7498, 0x85FA,
    0x96A3, 0x9C57, 0x9E9F, 0x6797, 0x6DCB, 0x81E8,
    0x7ACB, 0x7B20, 0x7C92, 0x72C0, 0x7099, 0x8B58,
    0x4EC0, 0x8336, 0x523A, 0x5207, 0x5EA6, 0x62D3,
    0x7CD6, 0x5B85, 0x6D1E, 0x66B4, 0x8F3B, 0x884C,
    0x964D, 0x898B, 0x5ED3, 0x5140, 0x55C0, 0x585A,
    0x6674, 0x51DE, 0x732A, 0x76CA, 0x793C, 0x795E,
    0x7965, 0x798F, 0x9756, 0x7CBE, 0x7FBD, 0x8612,
    0x8AF8, 0x9038, 0x90FD, 0x98EF, 0x98FC, 0x9928,
    0x9DB4, 0x90DE, 0x96B7, 0x4FAE, 0x50E7, 0x514D,
    0x52C9, 0x52E4, 0x5351, 0x559D, 0x5606, 0x5668,
    0x5840, 0x58A8, 0x5C64, 0x5C6E, 0x6094, 0x6168,
    0x618E, 0x61F2, 0x654F, 0x65E2, 0x6691, 0x6885,
    0x6D77, 0x6E1A, 0x6F22, 0x716E, 0x722B, 0x7422,
    0x7891, 0x793E, 0x7949, 0x7948, 0x7950, 0x7956,
    0x795D, 0x798D, 0x798E, 0x7A40, 0x7A81, 0x7BC0,
    0x7DF4, 0x7E09, 0x7E41, 0x7F72, 0x8005, 0x81ED,
    0x8279, 0x8279, 0x8457, 0x8910, 0x8996, 0x8B01,
    0x8B39, 0x8CD3, 0x8D08, 0x8FB6, 0x9038, 0x96E3,
    0x97FF, 0x983B, 0x6075, 0x242EE, 0x8218, 0x4E26,
    0x51B5, 0x5168, 0x4F80, 0x5145, 0x5180, 0x52C7,
    0x52FA, 0x559D, 0x5555, 0x5599, 0x55E2, 0x585A,
    0x58B3, 0x5944, 0x5954, 0x5A62, 0x5B28, 0x5ED2,
    0x5ED9, 0x5F69, 0x5FAD, 0x60D8, 0x614E, 0x6108,
    0x618E, 0x6160, 0x61F2, 0x6234, 0x63C4, 0x641C,
    0x6452, 0x6556, 0x6674, 0x6717, 0x671B, 0x6756,
    0x6B79, 0x6BBA, 0x6D41, 0x6EDB, 0x6ECB, 0x6F22,
    0x701E, 0x716E, 0x77A7, 0x7235, 0x72AF, 0x732A,
    0x7471, 0x7506, 0x753B, 0x761D, 0x761F, 0x76CA,
    0x76DB, 0x76F4, 0x774A, 0x7740, 0x78CC, 0x7AB1,
    0x7BC0, 0x7C7B, 0x7D5B, 0x7DF4, 0x7F3E, 0x8005,
    0x8352, 0x83EF, 0x8779, 0x8941, 0x8986, 0x8996,
    0x8ABF, 0x8AF8, 0x8ACB, 0x8B01, 0x8AFE, 0x8AED,
    0x8B39, 0x8B8A, 0x8D08, 0x8F38, 0x9072, 0x9199,
    0x9276, 0x967C, 0x96E3, 0x9756, 0x97DB, 0x97FF,
    0x980B, 0x983B, 0x9B12, 0x9F9C, 0x2284A, 0x22844,
    0x233D5, 0x3B9D, 0x4018, 0x4039, 0x25249, 0x25CD0,
    0x27ED3, 0x9F43, 0x9F8E, 0x05D9, 0x05B4, 0x05F2,
    0x05B7, 0x05E9, 0x05C1, 0x05E9, 0x05C2, 0x05E9,
    0x05BC, 0x05C1, 0x05E9, 0x05BC, 0x05C2, 0x05D0,
    0x05B7, 0x05D0, 0x05B8, 0x05D0, 0x05BC, 0x05D1,
    0x05BC, 0x05D2, 0x05BC, 0x05D3, 0x05BC, 0x05D4,
    0x05BC, 0x05D5, 0x05BC, 0x05D6, 0x05BC, 0x05D8,
    0x05BC, 0x05D9, 0x05BC, 0x05DA, 0x05BC, 0x05DB,
    0x05BC, 0x05DC, 0x05BC, 0x05DE, 0x05BC, 0x05E0,
    0x05BC, 0x05E1, 0x05BC, 0x05E3, 0x05BC, 0x05E4,
    0x05BC, 0x05E6, 0x05BC, 0x05E7, 0x05BC, 0x05E8,
    0x05BC, 0x05E9, 0x05BC, 0x05EA, 0x05BC, 0x05D5,
    0x05B9, 0x05D1, 0x05BF, 0x05DB, 0x05BF, 0x05E4,
    0x05BF,
};
inline constexpr uint32_t kDecompPool_size = 2803;

inline constexpr CccEntry kCcc[] = {
    {0x0300,230}, {0x0301,230}, {0x0302,230}, {0x0303,230}, {0x0304,230}, {0x0305,230},
    {0x0306,230}, {0x0307,230}, {0x0308,230}, {0x0309,230}, {0x030A,230}, {0x030B,230},
    {0x030C,230}, {0x030D,230}, {0x030E,230}, {0x030F,230}, {0x0310,230}, {0x0311,230},
    {0x0312,230}, {0x0313,230}, {0x0314,230}, {0x0315,232}, {0x0316,220}, {0x0317,220},
    {0x0318,220}, {0x0319,220}, {0x031A,232}, {0x031B,216}, {0x031C,220}, {0x031D,220},
    {0x031E,220}, {0x031F,220}, {0x0320,220}, {0x0321,202}, {0x0322,202}, {0x0323,220},
    {0x0324,220}, {0x0325,220}, {0x0326,220}, {0x0327,202}, {0x0328,202}, {0x0329,220},
    {0x032A,220}, {0x032B,220}, {0x032C,220}, {0x032D,220}, {0x032E,220}, {0x032F,220},
    {0x0330,220}, {0x0331,220}, {0x0332,220}, {0x0333,220}, {0x0334,1}, {0x0335,1},
    {0x0336,1}, {0x0337,1}, {0x0338,1}, {0x0339,220}, {0x033A,220}, {0x033B,220},
    {0x033C,220}, {0x033D,230}, {0x033E,230}, {0x033F,230}, {0x0340,230}, {0x0341,230},
    {0x0342,230}, {0x0343,230}, {0x0344,230}, {0x0345,240}, {0x0346,230}, {0x0347,220},
    {0x0348,220}, {0x0349,220}, {0x034A,230}, {0x034B,230}, {0x034C,230}, {0x034D,220},
    {0x034E,220}, {0x0350,230}, {0x0351,230}, {0x0352,230}, {0x0353,220}, {0x0354,220},
    {0x0355,220}, {0x0356,220}, {0x0357,230}, {0x0358,232}, {0x0359,220}, {0x035A,220},
    {0x035B,230}, {0x035C,233}, {0x035D,234}, {0x035E,234}, {0x035F,233}, {0x0360,234},
    {0x0361,234}, {0x0362,233}, {0x0363,230}, {0x0364,230}, {0x0365,230}, {0x0366,230},
    {0x0367,230}, {0x0368,230}, {0x0369,230}, {0x036A,230}, {0x036B,230}, {0x036C,230},
    {0x036D,230}, {0x036E,230}, {0x036F,230}, {0x0483,230}, {0x0484,230}, {0x0485,230},
    {0x0486,230}, {0x0487,230}, {0x0591,220}, {0x0592,230}, {0x0593,230}, {0x0594,230},
    {0x0595,230}, {0x0596,220}, {0x0597,230}, {0x0598,230}, {0x0599,230}, {0x059A,222},
    {0x059B,220}, {0x059C,230}, {0x059D,230}, {0x059E,230}, {0x059F,230}, {0x05A0,230},
    {0x05A1,230}, {0x05A2,220}, {0x05A3,220}, {0x05A4,220}, {0x05A5,220}, {0x05A6,220},
    {0x05A7,220}, {0x05A8,230}, {0x05A9,230}, {0x05AA,220}, {0x05AB,230}, {0x05AC,230},
    {0x05AD,222}, {0x05AE,228}, {0x05AF,230}, {0x05B0,10}, {0x05B1,11}, {0x05B2,12},
    {0x05B3,13}, {0x05B4,14}, {0x05B5,15}, {0x05B6,16}, {0x05B7,17}, {0x05B8,18},
    {0x05B9,19}, {0x05BA,19}, {0x05BB,20}, {0x05BC,21}, {0x05BD,22}, {0x05BF,23},
    {0x05C1,24}, {0x05C2,25}, {0x05C4,230}, {0x05C5,220}, {0x05C7,18}, {0x0610,230},
    {0x0611,230}, {0x0612,230}, {0x0613,230}, {0x0614,230}, {0x0615,230}, {0x0616,230},
    {0x0617,230}, {0x0618,30}, {0x0619,31}, {0x061A,32}, {0x064B,27}, {0x064C,28},
    {0x064D,29}, {0x064E,30}, {0x064F,31}, {0x0650,32}, {0x0651,33}, {0x0652,34},
    {0x0653,230}, {0x0654,230}, {0x0655,220}, {0x0656,220}, {0x0657,230}, {0x0658,230},
    {0x0659,230}, {0x065A,230}, {0x065B,230}, {0x065C,220}, {0x065D,230}, {0x065E,230},
    {0x065F,220}, {0x0670,35}, {0x06D6,230}, {0x06D7,230}, {0x06D8,230}, {0x06D9,230},
    {0x06DA,230}, {0x06DB,230}, {0x06DC,230}, {0x06DF,230}, {0x06E0,230}, {0x06E1,230},
    {0x06E2,230}, {0x06E3,220}, {0x06E4,230}, {0x06E7,230}, {0x06E8,230}, {0x06EA,220},
    {0x06EB,230}, {0x06EC,230}, {0x06ED,220}, {0x0711,36}, {0x0730,230}, {0x0731,220},
    {0x0732,230}, {0x0733,230}, {0x0734,220}, {0x0735,230}, {0x0736,230}, {0x0737,220},
    {0x0738,220}, {0x0739,220}, {0x073A,230}, {0x073B,220}, {0x073C,220}, {0x073D,230},
    {0x073E,220}, {0x073F,230}, {0x0740,230}, {0x0741,230}, {0x0742,220}, {0x0743,230},
    {0x0744,220}, {0x0745,230}, {0x0746,220}, {0x0747,230}, {0x0748,220}, {0x0749,230},
    {0x074A,230}, {0x07EB,230}, {0x07EC,230}, {0x07ED,230}, {0x07EE,230}, {0x07EF,230},
    {0x07F0,230}, {0x07F1,230}, {0x07F2,220}, {0x07F3,230}, {0x07FD,220}, {0x0816,230},
    {0x0817,230}, {0x0818,230}, {0x0819,230}, {0x081B,230}, {0x081C,230}, {0x081D,230},
    {0x081E,230}, {0x081F,230}, {0x0820,230}, {0x0821,230}, {0x0822,230}, {0x0823,230},
    {0x0825,230}, {0x0826,230}, {0x0827,230}, {0x0829,230}, {0x082A,230}, {0x082B,230},
    {0x082C,230}, {0x082D,230}, {0x0859,220}, {0x085A,220}, {0x085B,220}, {0x08D3,220},
    {0x08D4,230}, {0x08D5,230}, {0x08D6,230}, {0x08D7,230}, {0x08D8,230}, {0x08D9,230},
    {0x08DA,230}, {0x08DB,230}, {0x08DC,230}, {0x08DD,230}, {0x08DE,230}, {0x08DF,230},
    {0x08E0,230}, {0x08E1,230}, {0x08E3,220}, {0x08E4,230}, {0x08E5,230}, {0x08E6,220},
    {0x08E7,230}, {0x08E8,230}, {0x08E9,220}, {0x08EA,230}, {0x08EB,230}, {0x08EC,230},
    {0x08ED,220}, {0x08EE,220}, {0x08EF,220}, {0x08F0,27}, {0x08F1,28}, {0x08F2,29},
    {0x08F3,230}, {0x08F4,230}, {0x08F5,230}, {0x08F6,220}, {0x08F7,230}, {0x08F8,230},
    {0x08F9,220}, {0x08FA,220}, {0x08FB,230}, {0x08FC,230}, {0x08FD,230}, {0x08FE,230},
    {0x08FF,230}, {0x093C,7}, {0x094D,9}, {0x0951,230}, {0x0952,220}, {0x0953,230},
    {0x0954,230}, {0x09BC,7}, {0x09CD,9}, {0x09FE,230}, {0x0A3C,7}, {0x0A4D,9},
    {0x0ABC,7}, {0x0ACD,9}, {0x0B3C,7}, {0x0B4D,9}, {0x0BCD,9}, {0x0C4D,9},
    {0x0C55,84}, {0x0C56,91}, {0x0CBC,7}, {0x0CCD,9}, {0x0D3B,9}, {0x0D3C,9},
    {0x0D4D,9}, {0x0DCA,9}, {0x0E38,103}, {0x0E39,103}, {0x0E3A,9}, {0x0E48,107},
    {0x0E49,107}, {0x0E4A,107}, {0x0E4B,107}, {0x0EB8,118}, {0x0EB9,118}, {0x0EBA,9},
    {0x0EC8,122}, {0x0EC9,122}, {0x0ECA,122}, {0x0ECB,122}, {0x0F18,220}, {0x0F19,220},
    {0x0F35,220}, {0x0F37,220}, {0x0F39,216}, {0x0F71,129}, {0x0F72,130}, {0x0F74,132},
    {0x0F7A,130}, {0x0F7B,130}, {0x0F7C,130}, {0x0F7D,130}, {0x0F80,130}, {0x0F82,230},
    {0x0F83,230}, {0x0F84,9}, {0x0F86,230}, {0x0F87,230}, {0x0FC6,220}, {0x1037,7},
    {0x1039,9}, {0x103A,9}, {0x108D,220}, {0x135D,230}, {0x135E,230}, {0x135F,230},
    {0x1714,9}, {0x1734,9}, {0x17D2,9}, {0x17DD,230}, {0x18A9,228}, {0x1939,222},
    {0x193A,230}, {0x193B,220}, {0x1A17,230}, {0x1A18,220}, {0x1A60,9}, {0x1A75,230},
    {0x1A76,230}, {0x1A77,230}, {0x1A78,230}, {0x1A79,230}, {0x1A7A,230}, {0x1A7B,230},
    {0x1A7C,230}, {0x1A7F,220}, {0x1AB0,230}, {0x1AB1,230}, {0x1AB2,230}, {0x1AB3,230},
    {0x1AB4,230}, {0x1AB5,220}, {0x1AB6,220}, {0x1AB7,220}, {0x1AB8,220}, {0x1AB9,220},
    {0x1ABA,220}, {0x1ABB,230}, {0x1ABC,230}, {0x1ABD,220}, {0x1ABF,220}, {0x1AC0,220},
    {0x1B34,7}, {0x1B44,9}, {0x1B6B,230}, {0x1B6C,220}, {0x1B6D,230}, {0x1B6E,230},
    {0x1B6F,230}, {0x1B70,230}, {0x1B71,230}, {0x1B72,230}, {0x1B73,230}, {0x1BAA,9},
    {0x1BAB,9}, {0x1BE6,7}, {0x1BF2,9}, {0x1BF3,9}, {0x1C37,7}, {0x1CD0,230},
    {0x1CD1,230}, {0x1CD2,230}, {0x1CD4,1}, {0x1CD5,220}, {0x1CD6,220}, {0x1CD7,220},
    {0x1CD8,220}, {0x1CD9,220}, {0x1CDA,230}, {0x1CDB,230}, {0x1CDC,220}, {0x1CDD,220},
    {0x1CDE,220}, {0x1CDF,220}, {0x1CE0,230}, {0x1CE2,1}, {0x1CE3,1}, {0x1CE4,1},
    {0x1CE5,1}, {0x1CE6,1}, {0x1CE7,1}, {0x1CE8,1}, {0x1CED,220}, {0x1CF4,230},
    {0x1CF8,230}, {0x1CF9,230}, {0x1DC0,230}, {0x1DC1,230}, {0x1DC2,220}, {0x1DC3,230},
    {0x1DC4,230}, {0x1DC5,230}, {0x1DC6,230}, {0x1DC7,230}, {0x1DC8,230}, {0x1DC9,230},
    {0x1DCA,220}, {0x1DCB,230}, {0x1DCC,230}, {0x1DCD,234}, {0x1DCE,214}, {0x1DCF,220},
    {0x1DD0,202}, {0x1DD1,230}, {0x1DD2,230}, {0x1DD3,230}, {0x1DD4,230}, {0x1DD5,230},
    {0x1DD6,230}, {0x1DD7,230}, {0x1DD8,230}, {0x1DD9,230}, {0x1DDA,230}, {0x1DDB,230},
    {0x1DDC,230}, {0x1DDD,230}, {0x1DDE,230}, {0x1DDF,230}, {0x1DE0,230}, {0x1DE1,230},
    {0x1DE2,230}, {0x1DE3,230}, {0x1DE4,230}, {0x1DE5,230}, {0x1DE6,230}, {0x1DE7,230},
    {0x1DE8,230}, {0x1DE9,230}, {0x1DEA,230}, {0x1DEB,230}, {0x1DEC,230}, {0x1DED,230},
    {0x1DEE,230}, {0x1DEF,230}, {0x1DF0,230}, {0x1DF1,230}, {0x1DF2,230}, {0x1DF3,230},
    {0x1DF4,230}, {0x1DF5,230}, {0x1DF6,232}, {0x1DF7,228}, {0x1DF8,228}, {0x1DF9,220},
    {0x1DFB,230}, {0x1DFC,233}, {0x1DFD,220}, {0x1DFE,230}, {0x1DFF,220}, {0x20D0,230},
    {0x20D1,230}, {0x20D2,1}, {0x20D3,1}, {0x20D4,230}, {0x20D5,230}, {0x20D6,230},
    {0x20D7,230}, {0x20D8,1}, {0x20D9,1}, {0x20DA,1}, {0x20DB,230}, {0x20DC,230},
    {0x20E1,230}, {0x20E5,1}, {0x20E6,1}, {0x20E7,230}, {0x20E8,220}, {0x20E9,230},
    {0x20EA,1}, {0x20EB,1}, {0x20EC,220}, {0x20ED,220}, {0x20EE,220}, {0x20EF,220},
    {0x20F0,230}, {0x2CEF,230}, {0x2CF0,230}, {0x2CF1,230}, {0x2D7F,9}, {0x2DE0,230},
    {0x2DE1,230}, {0x2DE2,230}, {0x2DE3,230}, {0x2DE4,230}, {0x2DE5,230}, {0x2DE6,230},
    {0x2DE7,230}, {0x2DE8,230}, {0x2DE9,230}, {0x2DEA,230}, {0x2DEB,230}, {0x2DEC,230},
    {0x2DED,230}, {0x2DEE,230}, {0x2DEF,230}, {0x2DF0,230}, {0x2DF1,230}, {0x2DF2,230},
    {0x2DF3,230}, {0x2DF4,230}, {0x2DF5,230}, {0x2DF6,230}, {0x2DF7,230}, {0x2DF8,230},
    {0x2DF9,230}, {0x2DFA,230}, {0x2DFB,230}, {0x2DFC,230}, {0x2DFD,230}, {0x2DFE,230},
    {0x2DFF,230}, {0x302A,218}, {0x302B,228}, {0x302C,232}, {0x302D,222}, {0x302E,224},
    {0x302F,224}, {0x3099,8}, {0x309A,8}, {0xA66F,230}, {0xA674,230}, {0xA675,230},
    {0xA676,230}, {0xA677,230}, {0xA678,230}, {0xA679,230}, {0xA67A,230}, {0xA67B,230},
    {0xA67C,230}, {0xA67D,230}, {0xA69E,230}, {0xA69F,230}, {0xA6F0,230}, {0xA6F1,230},
    {0xA806,9}, {0xA82C,9}, {0xA8C4,9}, {0xA8E0,230}, {0xA8E1,230}, {0xA8E2,230},
    {0xA8E3,230}, {0xA8E4,230}, {0xA8E5,230}, {0xA8E6,230}, {0xA8E7,230}, {0xA8E8,230},
    {0xA8E9,230}, {0xA8EA,230}, {0xA8EB,230}, {0xA8EC,230}, {0xA8ED,230}, {0xA8EE,230},
    {0xA8EF,230}, {0xA8F0,230}, {0xA8F1,230}, {0xA92B,220}, {0xA92C,220}, {0xA92D,220},
    {0xA953,9}, {0xA9B3,7}, {0xA9C0,9}, {0xAAB0,230}, {0xAAB2,230}, {0xAAB3,230},
    {0xAAB4,220}, {0xAAB7,230}, {0xAAB8,230}, {0xAABE,230}, {0xAABF,230}, {0xAAC1,230},
    {0xAAF6,9}, {0xABED,9}, {0xFB1E,26}, {0xFE20,230}, {0xFE21,230}, {0xFE22,230},
    {0xFE23,230}, {0xFE24,230}, {0xFE25,230}, {0xFE26,230}, {0xFE27,220}, {0xFE28,220},
    {0xFE29,220}, {0xFE2A,220}, {0xFE2B,220}, {0xFE2C,220}, {0xFE2D,220}, {0xFE2E,230},
    {0xFE2F,230},
};
inline constexpr uint32_t kCcc_size = 673;

inline constexpr CompEntry kComp[] = {
    {0x003C,0x0338,0x226E}, {0x003D,0x0338,0x2260}, {0x003E,0x0338,0x226F}, {0x0041,0x0300,0x00C0}, {0x0041,0x0301,0x00C1}, {0x0041,0x0302,0x00C2},
    {0x0041,0x0303,0x00C3}, {0x0041,0x0304,0x0100}, {0x0041,0x0306,0x0102}, {0x0041,0x0307,0x0226}, {0x0041,0x0308,0x00C4}, {0x0041,0x0309,0x1EA2},
    {0x0041,0x030A,0x00C5}, {0x0041,0x030C,0x01CD}, {0x0041,0x030F,0x0200}, {0x0041,0x0311,0x0202}, {0x0041,0x0323,0x1EA0}, {0x0041,0x0325,0x1E00},
    {0x0041,0x0328,0x0104}, {0x0042,0x0307,0x1E02}, {0x0042,0x0323,0x1E04}, {0x0042,0x0331,0x1E06}, {0x0043,0x0301,0x0106}, {0x0043,0x0302,0x0108},
    {0x0043,0x0307,0x010A}, {0x0043,0x030C,0x010C}, {0x0043,0x0327,0x00C7}, {0x0044,0x0307,0x1E0A}, {0x0044,0x030C,0x010E}, {0x0044,0x0323,0x1E0C},
    {0x0044,0x0327,0x1E10}, {0x0044,0x032D,0x1E12}, {0x0044,0x0331,0x1E0E}, {0x0045,0x0300,0x00C8}, {0x0045,0x0301,0x00C9}, {0x0045,0x0302,0x00CA},
    {0x0045,0x0303,0x1EBC}, {0x0045,0x0304,0x0112}, {0x0045,0x0306,0x0114}, {0x0045,0x0307,0x0116}, {0x0045,0x0308,0x00CB}, {0x0045,0x0309,0x1EBA},
    {0x0045,0x030C,0x011A}, {0x0045,0x030F,0x0204}, {0x0045,0x0311,0x0206}, {0x0045,0x0323,0x1EB8}, {0x0045,0x0327,0x0228}, {0x0045,0x0328,0x0118},
    {0x0045,0x032D,0x1E18}, {0x0045,0x0330,0x1E1A}, {0x0046,0x0307,0x1E1E}, {0x0047,0x0301,0x01F4}, {0x0047,0x0302,0x011C}, {0x0047,0x0304,0x1E20},
    {0x0047,0x0306,0x011E}, {0x0047,0x0307,0x0120}, {0x0047,0x030C,0x01E6}, {0x0047,0x0327,0x0122}, {0x0048,0x0302,0x0124}, {0x0048,0x0307,0x1E22},
    {0x0048,0x0308,0x1E26}, {0x0048,0x030C,0x021E}, {0x0048,0x0323,0x1E24}, {0x0048,0x0327,0x1E28}, {0x0048,0x032E,0x1E2A}, {0x0049,0x0300,0x00CC},
    {0x0049,0x0301,0x00CD}, {0x0049,0x0302,0x00CE}, {0x0049,0x0303,0x0128}, {0x0049,0x0304,0x012A}, {0x0049,0x0306,0x012C}, {0x0049,0x0307,0x0130},
    {0x0049,0x0308,0x00CF}, {0x0049,0x0309,0x1EC8}, {0x0049,0x030C,0x01CF}, {0x0049,0x030F,0x0208}, {0x0049,0x0311,0x020A}, {0x0049,0x0323,0x1ECA},
    {0x0049,0x0328,0x012E}, {0x0049,0x0330,0x1E2C}, {0x004A,0x0302,0x0134}, {0x004B,0x0301,0x1E30}, {0x004B,0x030C,0x01E8}, {0x004B,0x0323,0x1E32},
    {0x004B,0x0327,0x0136}, {0x004B,0x0331,0x1E34}, {0x004C,0x0301,0x0139}, {0x004C,0x030C,0x013D}, {0x004C,0x0323,0x1E36}, {0x004C,0x0327,0x013B},
    {0x004C,0x032D,0x1E3C}, {0x004C,0x0331,0x1E3A}, {0x004D,0x0301,0x1E3E}, {0x004D,0x0307,0x1E40}, {0x004D,0x0323,0x1E42}, {0x004E,0x0300,0x01F8},
    {0x004E,0x0301,0x0143}, {0x004E,0x0303,0x00D1}, {0x004E,0x0307,0x1E44}, {0x004E,0x030C,0x0147}, {0x004E,0x0323,0x1E46}, {0x004E,0x0327,0x0145},
    {0x004E,0x032D,0x1E4A}, {0x004E,0x0331,0x1E48}, {0x004F,0x0300,0x00D2}, {0x004F,0x0301,0x00D3}, {0x004F,0x0302,0x00D4}, {0x004F,0x0303,0x00D5},
    {0x004F,0x0304,0x014C}, {0x004F,0x0306,0x014E}, {0x004F,0x0307,0x022E}, {0x004F,0x0308,0x00D6}, {0x004F,0x0309,0x1ECE}, {0x004F,0x030B,0x0150},
    {0x004F,0x030C,0x01D1}, {0x004F,0x030F,0x020C}, {0x004F,0x0311,0x020E}, {0x004F,0x031B,0x01A0}, {0x004F,0x0323,0x1ECC}, {0x004F,0x0328,0x01EA},
    {0x0050,0x0301,0x1E54}, {0x0050,0x0307,0x1E56}, {0x0052,0x0301,0x0154}, {0x0052,0x0307,0x1E58}, {0x0052,0x030C,0x0158}, {0x0052,0x030F,0x0210},
    {0x0052,0x0311,0x0212}, {0x0052,0x0323,0x1E5A}, {0x0052,0x0327,0x0156}, {0x0052,0x0331,0x1E5E}, {0x0053,0x0301,0x015A}, {0x0053,0x0302,0x015C},
    {0x0053,0x0307,0x1E60}, {0x0053,0x030C,0x0160}, {0x0053,0x0323,0x1E62}, {0x0053,0x0326,0x0218}, {0x0053,0x0327,0x015E}, {0x0054,0x0307,0x1E6A},
    {0x0054,0x030C,0x0164}, {0x0054,0x0323,0x1E6C}, {0x0054,0x0326,0x021A}, {0x0054,0x0327,0x0162}, {0x0054,0x032D,0x1E70}, {0x0054,0x0331,0x1E6E},
    {0x0055,0x0300,0x00D9}, {0x0055,0x0301,0x00DA}, {0x0055,0x0302,0x00DB}, {0x0055,0x0303,0x0168}, {0x0055,0x0304,0x016A}, {0x0055,0x0306,0x016C},
    {0x0055,0x0308,0x00DC}, {0x0055,0x0309,0x1EE6}, {0x0055,0x030A,0x016E}, {0x0055,0x030B,0x0170}, {0x0055,0x030C,0x01D3}, {0x0055,0x030F,0x0214},
    {0x0055,0x0311,0x0216}, {0x0055,0x031B,0x01AF}, {0x0055,0x0323,0x1EE4}, {0x0055,0x0324,0x1E72}, {0x0055,0x0328,0x0172}, {0x0055,0x032D,0x1E76},
    {0x0055,0x0330,0x1E74}, {0x0056,0x0303,0x1E7C}, {0x0056,0x0323,0x1E7E}, {0x0057,0x0300,0x1E80}, {0x0057,0x0301,0x1E82}, {0x0057,0x0302,0x0174},
    {0x0057,0x0307,0x1E86}, {0x0057,0x0308,0x1E84}, {0x0057,0x0323,0x1E88}, {0x0058,0x0307,0x1E8A}, {0x0058,0x0308,0x1E8C}, {0x0059,0x0300,0x1EF2},
    {0x0059,0x0301,0x00DD}, {0x0059,0x0302,0x0176}, {0x0059,0x0303,0x1EF8}, {0x0059,0x0304,0x0232}, {0x0059,0x0307,0x1E8E}, {0x0059,0x0308,0x0178},
    {0x0059,0x0309,0x1EF6}, {0x0059,0x0323,0x1EF4}, {0x005A,0x0301,0x0179}, {0x005A,0x0302,0x1E90}, {0x005A,0x0307,0x017B}, {0x005A,0x030C,0x017D},
    {0x005A,0x0323,0x1E92}, {0x005A,0x0331,0x1E94}, {0x0061,0x0300,0x00E0}, {0x0061,0x0301,0x00E1}, {0x0061,0x0302,0x00E2}, {0x0061,0x0303,0x00E3},
    {0x0061,0x0304,0x0101}, {0x0061,0x0306,0x0103}, {0x0061,0x0307,0x0227}, {0x0061,0x0308,0x00E4}, {0x0061,0x0309,0x1EA3}, {0x0061,0x030A,0x00E5},
    {0x0061,0x030C,0x01CE}, {0x0061,0x030F,0x0201}, {0x0061,0x0311,0x0203}, {0x0061,0x0323,0x1EA1}, {0x0061,0x0325,0x1E01}, {0x0061,0x0328,0x0105},
    {0x0062,0x0307,0x1E03}, {0x0062,0x0323,0x1E05}, {0x0062,0x0331,0x1E07}, {0x0063,0x0301,0x0107}, {0x0063,0x0302,0x0109}, {0x0063,0x0307,0x010B},
    {0x0063,0x030C,0x010D}, {0x0063,0x0327,0x00E7}, {0x0064,0x0307,0x1E0B}, {0x0064,0x030C,0x010F}, {0x0064,0x0323,0x1E0D}, {0x0064,0x0327,0x1E11},
    {0x0064,0x032D,0x1E13}, {0x0064,0x0331,0x1E0F}, {0x0065,0x0300,0x00E8}, {0x0065,0x0301,0x00E9}, {0x0065,0x0302,0x00EA}, {0x0065,0x0303,0x1EBD},
    {0x0065,0x0304,0x0113}, {0x0065,0x0306,0x0115}, {0x0065,0x0307,0x0117}, {0x0065,0x0308,0x00EB}, {0x0065,0x0309,0x1EBB}, {0x0065,0x030C,0x011B},
    {0x0065,0x030F,0x0205}, {0x0065,0x0311,0x0207}, {0x0065,0x0323,0x1EB9}, {0x0065,0x0327,0x0229}, {0x0065,0x0328,0x0119}, {0x0065,0x032D,0x1E19},
    {0x0065,0x0330,0x1E1B}, {0x0066,0x0307,0x1E1F}, {0x0067,0x0301,0x01F5}, {0x0067,0x0302,0x011D}, {0x0067,0x0304,0x1E21}, {0x0067,0x0306,0x011F},
    {0x0067,0x0307,0x0121}, {0x0067,0x030C,0x01E7}, {0x0067,0x0327,0x0123}, {0x0068,0x0302,0x0125}, {0x0068,0x0307,0x1E23}, {0x0068,0x0308,0x1E27},
    {0x0068,0x030C,0x021F}, {0x0068,0x0323,0x1E25}, {0x0068,0x0327,0x1E29}, {0x0068,0x032E,0x1E2B}, {0x0068,0x0331,0x1E96}, {0x0069,0x0300,0x00EC},
    {0x0069,0x0301,0x00ED}, {0x0069,0x0302,0x00EE}, {0x0069,0x0303,0x0129}, {0x0069,0x0304,0x012B}, {0x0069,0x0306,0x012D}, {0x0069,0x0308,0x00EF},
    {0x0069,0x0309,0x1EC9}, {0x0069,0x030C,0x01D0}, {0x0069,0x030F,0x0209}, {0x0069,0x0311,0x020B}, {0x0069,0x0323,0x1ECB}, {0x0069,0x0328,0x012F},
    {0x0069,0x0330,0x1E2D}, {0x006A,0x0302,0x0135}, {0x006A,0x030C,0x01F0}, {0x006B,0x0301,0x1E31}, {0x006B,0x030C,0x01E9}, {0x006B,0x0323,0x1E33},
    {0x006B,0x0327,0x0137}, {0x006B,0x0331,0x1E35}, {0x006C,0x0301,0x013A}, {0x006C,0x030C,0x013E}, {0x006C,0x0323,0x1E37}, {0x006C,0x0327,0x013C},
    {0x006C,0x032D,0x1E3D}, {0x006C,0x0331,0x1E3B}, {0x006D,0x0301,0x1E3F}, {0x006D,0x0307,0x1E41}, {0x006D,0x0323,0x1E43}, {0x006E,0x0300,0x01F9},
    {0x006E,0x0301,0x0144}, {0x006E,0x0303,0x00F1}, {0x006E,0x0307,0x1E45}, {0x006E,0x030C,0x0148}, {0x006E,0x0323,0x1E47}, {0x006E,0x0327,0x0146},
    {0x006E,0x032D,0x1E4B}, {0x006E,0x0331,0x1E49}, {0x006F,0x0300,0x00F2}, {0x006F,0x0301,0x00F3}, {0x006F,0x0302,0x00F4}, {0x006F,0x0303,0x00F5},
    {0x006F,0x0304,0x014D}, {0x006F,0x0306,0x014F}, {0x006F,0x0307,0x022F}, {0x006F,0x0308,0x00F6}, {0x006F,0x0309,0x1ECF}, {0x006F,0x030B,0x0151},
    {0x006F,0x030C,0x01D2}, {0x006F,0x030F,0x020D}, {0x006F,0x0311,0x020F}, {0x006F,0x031B,0x01A1}, {0x006F,0x0323,0x1ECD}, {0x006F,0x0328,0x01EB},
    {0x0070,0x0301,0x1E55}, {0x0070,0x0307,0x1E57}, {0x0072,0x0301,0x0155}, {0x0072,0x0307,0x1E59}, {0x0072,0x030C,0x0159}, {0x0072,0x030F,0x0211},
    {0x0072,0x0311,0x0213}, {0x0072,0x0323,0x1E5B}, {0x0072,0x0327,0x0157}, {0x0072,0x0331,0x1E5F}, {0x0073,0x0301,0x015B}, {0x0073,0x0302,0x015D},
    {0x0073,0x0307,0x1E61}, {0x0073,0x030C,0x0161}, {0x0073,0x0323,0x1E63}, {0x0073,0x0326,0x0219}, {0x0073,0x0327,0x015F}, {0x0074,0x0307,0x1E6B},
    {0x0074,0x0308,0x1E97}, {0x0074,0x030C,0x0165}, {0x0074,0x0323,0x1E6D}, {0x0074,0x0326,0x021B}, {0x0074,0x0327,0x0163}, {0x0074,0x032D,0x1E71},
    {0x0074,0x0331,0x1E6F}, {0x0075,0x0300,0x00F9}, {0x0075,0x0301,0x00FA}, {0x0075,0x0302,0x00FB}, {0x0075,0x0303,0x0169}, {0x0075,0x0304,0x016B},
    {0x0075,0x0306,0x016D}, {0x0075,0x0308,0x00FC}, {0x0075,0x0309,0x1EE7}, {0x0075,0x030A,0x016F}, {0x0075,0x030B,0x0171}, {0x0075,0x030C,0x01D4},
    {0x0075,0x030F,0x0215}, {0x0075,0x0311,0x0217}, {0x0075,0x031B,0x01B0}, {0x0075,0x0323,0x1EE5}, {0x0075,0x0324,0x1E73}, {0x0075,0x0328,0x0173},
    {0x0075,0x032D,0x1E77}, {0x0075,0x0330,0x1E75}, {0x0076,0x0303,0x1E7D}, {0x0076,0x0323,0x1E7F}, {0x0077,0x0300,0x1E81}, {0x0077,0x0301,0x1E83},
    {0x0077,0x0302,0x0175}, {0x0077,0x0307,0x1E87}, {0x0077,0x0308,0x1E85}, {0x0077,0x030A,0x1E98}, {0x0077,0x0323,0x1E89}, {0x0078,0x0307,0x1E8B},
    {0x0078,0x0308,0x1E8D}, {0x0079,0x0300,0x1EF3}, {0x0079,0x0301,0x00FD}, {0x0079,0x0302,0x0177}, {0x0079,0x0303,0x1EF9}, {0x0079,0x0304,0x0233},
    {0x0079,0x0307,0x1E8F}, {0x0079,0x0308,0x00FF}, {0x0079,0x0309,0x1EF7}, {0x0079,0x030A,0x1E99}, {0x0079,0x0323,0x1EF5}, {0x007A,0x0301,0x017A},
    {0x007A,0x0302,0x1E91}, {0x007A,0x0307,0x017C}, {0x007A,0x030C,0x017E}, {0x007A,0x0323,0x1E93}, {0x007A,0x0331,0x1E95}, {0x00A8,0x0300,0x1FED},
    {0x00A8,0x0301,0x0385}, {0x00A8,0x0342,0x1FC1}, {0x00C2,0x0300,0x1EA6}, {0x00C2,0x0301,0x1EA4}, {0x00C2,0x0303,0x1EAA}, {0x00C2,0x0309,0x1EA8},
    {0x00C4,0x0304,0x01DE}, {0x00C5,0x0301,0x01FA}, {0x00C6,0x0301,0x01FC}, {0x00C6,0x0304,0x01E2}, {0x00C7,0x0301,0x1E08}, {0x00CA,0x0300,0x1EC0},
    {0x00CA,0x0301,0x1EBE}, {0x00CA,0x0303,0x1EC4}, {0x00CA,0x0309,0x1EC2}, {0x00CF,0x0301,0x1E2E}, {0x00D4,0x0300,0x1ED2}, {0x00D4,0x0301,0x1ED0},
    {0x00D4,0x0303,0x1ED6}, {0x00D4,0x0309,0x1ED4}, {0x00D5,0x0301,0x1E4C}, {0x00D5,0x0304,0x022C}, {0x00D5,0x0308,0x1E4E}, {0x00D6,0x0304,0x022A},
    {0x00D8,0x0301,0x01FE}, {0x00DC,0x0300,0x01DB}, {0x00DC,0x0301,0x01D7}, {0x00DC,0x0304,0x01D5}, {0x00DC,0x030C,0x01D9}, {0x00E2,0x0300,0x1EA7},
    {0x00E2,0x0301,0x1EA5}, {0x00E2,0x0303,0x1EAB}, {0x00E2,0x0309,0x1EA9}, {0x00E4,0x0304,0x01DF}, {0x00E5,0x0301,0x01FB}, {0x00E6,0x0301,0x01FD},
    {0x00E6,0x0304,0x01E3}, {0x00E7,0x0301,0x1E09}, {0x00EA,0x0300,0x1EC1}, {0x00EA,0x0301,0x1EBF}, {0x00EA,0x0303,0x1EC5}, {0x00EA,0x0309,0x1EC3},
    {0x00EF,0x0301,0x1E2F}, {0x00F4,0x0300,0x1ED3}, {0x00F4,0x0301,0x1ED1}, {0x00F4,0x0303,0x1ED7}, {0x00F4,0x0309,0x1ED5}, {0x00F5,0x0301,0x1E4D},
    {0x00F5,0x0304,0x022D}, {0x00F5,0x0308,0x1E4F}, {0x00F6,0x0304,0x022B}, {0x00F8,0x0301,0x01FF}, {0x00FC,0x0300,0x01DC}, {0x00FC,0x0301,0x01D8},
    {0x00FC,0x0304,0x01D6}, {0x00FC,0x030C,0x01DA}, {0x0102,0x0300,0x1EB0}, {0x0102,0x0301,0x1EAE}, {0x0102,0x0303,0x1EB4}, {0x0102,0x0309,0x1EB2},
    {0x0103,0x0300,0x1EB1}, {0x0103,0x0301,0x1EAF}, {0x0103,0x0303,0x1EB5}, {0x0103,0x0309,0x1EB3}, {0x0112,0x0300,0x1E14}, {0x0112,0x0301,0x1E16},
    {0x0113,0x0300,0x1E15}, {0x0113,0x0301,0x1E17}, {0x014C,0x0300,0x1E50}, {0x014C,0x0301,0x1E52}, {0x014D,0x0300,0x1E51}, {0x014D,0x0301,0x1E53},
    {0x015A,0x0307,0x1E64}, {0x015B,0x0307,0x1E65}, {0x0160,0x0307,0x1E66}, {0x0161,0x0307,0x1E67}, {0x0168,0x0301,0x1E78}, {0x0169,0x0301,0x1E79},
    {0x016A,0x0308,0x1E7A}, {0x016B,0x0308,0x1E7B}, {0x017F,0x0307,0x1E9B}, {0x01A0,0x0300,0x1EDC}, {0x01A0,0x0301,0x1EDA}, {0x01A0,0x0303,0x1EE0},
    {0x01A0,0x0309,0x1EDE}, {0x01A0,0x0323,0x1EE2}, {0x01A1,0x0300,0x1EDD}, {0x01A1,0x0301,0x1EDB}, {0x01A1,0x0303,0x1EE1}, {0x01A1,0x0309,0x1EDF},
    {0x01A1,0x0323,0x1EE3}, {0x01AF,0x0300,0x1EEA}, {0x01AF,0x0301,0x1EE8}, {0x01AF,0x0303,0x1EEE}, {0x01AF,0x0309,0x1EEC}, {0x01AF,0x0323,0x1EF0},
    {0x01B0,0x0300,0x1EEB}, {0x01B0,0x0301,0x1EE9}, {0x01B0,0x0303,0x1EEF}, {0x01B0,0x0309,0x1EED}, {0x01B0,0x0323,0x1EF1}, {0x01B7,0x030C,0x01EE},
    {0x01EA,0x0304,0x01EC}, {0x01EB,0x0304,0x01ED}, {0x0226,0x0304,0x01E0}, {0x0227,0x0304,0x01E1}, {0x0228,0x0306,0x1E1C}, {0x0229,0x0306,0x1E1D},
    {0x022E,0x0304,0x0230}, {0x022F,0x0304,0x0231}, {0x0292,0x030C,0x01EF}, {0x0391,0x0300,0x1FBA}, {0x0391,0x0301,0x0386}, {0x0391,0x0304,0x1FB9},
    {0x0391,0x0306,0x1FB8}, {0x0391,0x0313,0x1F08}, {0x0391,0x0314,0x1F09}, {0x0391,0x0345,0x1FBC}, {0x0395,0x0300,0x1FC8}, {0x0395,0x0301,0x0388},
    {0x0395,0x0313,0x1F18}, {0x0395,0x0314,0x1F19}, {0x0397,0x0300,0x1FCA}, {0x0397,0x0301,0x0389}, {0x0397,0x0313,0x1F28}, {0x0397,0x0314,0x1F29},
    {0x0397,0x0345,0x1FCC}, {0x0399,0x0300,0x1FDA}, {0x0399,0x0301,0x038A}, {0x0399,0x0304,0x1FD9}, {0x0399,0x0306,0x1FD8}, {0x0399,0x0308,0x03AA},
    {0x0399,0x0313,0x1F38}, {0x0399,0x0314,0x1F39}, {0x039F,0x0300,0x1FF8}, {0x039F,0x0301,0x038C}, {0x039F,0x0313,0x1F48}, {0x039F,0x0314,0x1F49},
    {0x03A1,0x0314,0x1FEC}, {0x03A5,0x0300,0x1FEA}, {0x03A5,0x0301,0x038E}, {0x03A5,0x0304,0x1FE9}, {0x03A5,0x0306,0x1FE8}, {0x03A5,0x0308,0x03AB},
    {0x03A5,0x0314,0x1F59}, {0x03A9,0x0300,0x1FFA}, {0x03A9,0x0301,0x038F}, {0x03A9,0x0313,0x1F68}, {0x03A9,0x0314,0x1F69}, {0x03A9,0x0345,0x1FFC},
    {0x03AC,0x0345,0x1FB4}, {0x03AE,0x0345,0x1FC4}, {0x03B1,0x0300,0x1F70}, {0x03B1,0x0301,0x03AC}, {0x03B1,0x0304,0x1FB1}, {0x03B1,0x0306,0x1FB0},
    {0x03B1,0x0313,0x1F00}, {0x03B1,0x0314,0x1F01}, {0x03B1,0x0342,0x1FB6}, {0x03B1,0x0345,0x1FB3}, {0x03B5,0x0300,0x1F72}, {0x03B5,0x0301,0x03AD},
    {0x03B5,0x0313,0x1F10}, {0x03B5,0x0314,0x1F11}, {0x03B7,0x0300,0x1F74}, {0x03B7,0x0301,0x03AE}, {0x03B7,0x0313,0x1F20}, {0x03B7,0x0314,0x1F21},
    {0x03B7,0x0342,0x1FC6}, {0x03B7,0x0345,0x1FC3}, {0x03B9,0x0300,0x1F76}, {0x03B9,0x0301,0x03AF}, {0x03B9,0x0304,0x1FD1}, {0x03B9,0x0306,0x1FD0},
    {0x03B9,0x0308,0x03CA}, {0x03B9,0x0313,0x1F30}, {0x03B9,0x0314,0x1F31}, {0x03B9,0x0342,0x1FD6}, {0x03BF,0x0300,0x1F78}, {0x03BF,0x0301,0x03CC},
    {0x03BF,0x0313,0x1F40}, {0x03BF,0x0314,0x1F41}, {0x03C1,0x0313,0x1FE4}, {0x03C1,0x0314,0x1FE5}, {0x03C5,0x0300,0x1F7A}, {0x03C5,0x0301,0x03CD},
    {0x03C5,0x0304,0x1FE1}, {0x03C5,0x0306,0x1FE0}, {0x03C5,0x0308,0x03CB}, {0x03C5,0x0313,0x1F50}, {0x03C5,0x0314,0x1F51}, {0x03C5,0x0342,0x1FE6},
    {0x03C9,0x0300,0x1F7C}, {0x03C9,0x0301,0x03CE}, {0x03C9,0x0313,0x1F60}, {0x03C9,0x0314,0x1F61}, {0x03C9,0x0342,0x1FF6}, {0x03C9,0x0345,0x1FF3},
    {0x03CA,0x0300,0x1FD2}, {0x03CA,0x0301,0x0390}, {0x03CA,0x0342,0x1FD7}, {0x03CB,0x0300,0x1FE2}, {0x03CB,0x0301,0x03B0}, {0x03CB,0x0342,0x1FE7},
    {0x03CE,0x0345,0x1FF4}, {0x03D2,0x0301,0x03D3}, {0x03D2,0x0308,0x03D4}, {0x0406,0x0308,0x0407}, {0x0410,0x0306,0x04D0}, {0x0410,0x0308,0x04D2},
    {0x0413,0x0301,0x0403}, {0x0415,0x0300,0x0400}, {0x0415,0x0306,0x04D6}, {0x0415,0x0308,0x0401}, {0x0416,0x0306,0x04C1}, {0x0416,0x0308,0x04DC},
    {0x0417,0x0308,0x04DE}, {0x0418,0x0300,0x040D}, {0x0418,0x0304,0x04E2}, {0x0418,0x0306,0x0419}, {0x0418,0x0308,0x04E4}, {0x041A,0x0301,0x040C},
    {0x041E,0x0308,0x04E6}, {0x0423,0x0304,0x04EE}, {0x0423,0x0306,0x040E}, {0x0423,0x0308,0x04F0}, {0x0423,0x030B,0x04F2}, {0x0427,0x0308,0x04F4},
    {0x042B,0x0308,0x04F8}, {0x042D,0x0308,0x04EC}, {0x0430,0x0306,0x04D1}, {0x0430,0x0308,0x04D3}, {0x0433,0x0301,0x0453}, {0x0435,0x0300,0x0450},
    {0x0435,0x0306,0x04D7}, {0x0435,0x0308,0x0451}, {0x0436,0x0306,0x04C2}, {0x0436,0x0308,0x04DD}, {0x0437,0x0308,0x04DF}, {0x0438,0x0300,0x045D},
    {0x0438,0x0304,0x04E3}, {0x0438,0x0306,0x0439}, {0x0438,0x0308,0x04E5}, {0x043A,0x0301,0x045C}, {0x043E,0x0308,0x04E7}, {0x0443,0x0304,0x04EF},
    {0x0443,0x0306,0x045E}, {0x0443,0x0308,0x04F1}, {0x0443,0x030B,0x04F3}, {0x0447,0x0308,0x04F5}, {0x044B,0x0308,0x04F9}, {0x044D,0x0308,0x04ED},
    {0x0456,0x0308,0x0457}, {0x0474,0x030F,0x0476}, {0x0475,0x030F,0x0477}, {0x04D8,0x0308,0x04DA}, {0x04D9,0x0308,0x04DB}, {0x04E8,0x0308,0x04EA},
    {0x04E9,0x0308,0x04EB}, {0x0627,0x0653,0x0622}, {0x0627,0x0654,0x0623}, {0x0627,0x0655,0x0625}, {0x0648,0x0654,0x0624}, {0x064A,0x0654,0x0626},
    {0x06C1,0x0654,0x06C2}, {0x06D2,0x0654,0x06D3}, {0x06D5,0x0654,0x06C0}, {0x0928,0x093C,0x0929}, {0x0930,0x093C,0x0931}, {0x0933,0x093C,0x0934},
    {0x09C7,0x09BE,0x09CB}, {0x09C7,0x09D7,0x09CC}, {0x0B47,0x0B3E,0x0B4B}, {0x0B47,0x0B56,0x0B48}, {0x0B47,0x0B57,0x0B4C}, {0x0B92,0x0BD7,0x0B94},
    {0x0BC6,0x0BBE,0x0BCA}, {0x0BC6,0x0BD7,0x0BCC}, {0x0BC7,0x0BBE,0x0BCB}, {0x0C46,0x0C56,0x0C48}, {0x0CBF,0x0CD5,0x0CC0}, {0x0CC6,0x0CC2,0x0CCA},
    {0x0CC6,0x0CD5,0x0CC7}, {0x0CC6,0x0CD6,0x0CC8}, {0x0CCA,0x0CD5,0x0CCB}, {0x0D46,0x0D3E,0x0D4A}, {0x0D46,0x0D57,0x0D4C}, {0x0D47,0x0D3E,0x0D4B},
    {0x0DD9,0x0DCA,0x0DDA}, {0x0DD9,0x0DCF,0x0DDC}, {0x0DD9,0x0DDF,0x0DDE}, {0x0DDC,0x0DCA,0x0DDD}, {0x1025,0x102E,0x1026}, {0x1B05,0x1B35,0x1B06},
    {0x1B07,0x1B35,0x1B08}, {0x1B09,0x1B35,0x1B0A}, {0x1B0B,0x1B35,0x1B0C}, {0x1B0D,0x1B35,0x1B0E}, {0x1B11,0x1B35,0x1B12}, {0x1B3A,0x1B35,0x1B3B},
    {0x1B3C,0x1B35,0x1B3D}, {0x1B3E,0x1B35,0x1B40}, {0x1B3F,0x1B35,0x1B41}, {0x1B42,0x1B35,0x1B43}, {0x1E36,0x0304,0x1E38}, {0x1E37,0x0304,0x1E39},
    {0x1E5A,0x0304,0x1E5C}, {0x1E5B,0x0304,0x1E5D}, {0x1E62,0x0307,0x1E68}, {0x1E63,0x0307,0x1E69}, {0x1EA0,0x0302,0x1EAC}, {0x1EA0,0x0306,0x1EB6},
    {0x1EA1,0x0302,0x1EAD}, {0x1EA1,0x0306,0x1EB7}, {0x1EB8,0x0302,0x1EC6}, {0x1EB9,0x0302,0x1EC7}, {0x1ECC,0x0302,0x1ED8}, {0x1ECD,0x0302,0x1ED9},
    {0x1F00,0x0300,0x1F02}, {0x1F00,0x0301,0x1F04}, {0x1F00,0x0342,0x1F06}, {0x1F00,0x0345,0x1F80}, {0x1F01,0x0300,0x1F03}, {0x1F01,0x0301,0x1F05},
    {0x1F01,0x0342,0x1F07}, {0x1F01,0x0345,0x1F81}, {0x1F02,0x0345,0x1F82}, {0x1F03,0x0345,0x1F83}, {0x1F04,0x0345,0x1F84}, {0x1F05,0x0345,0x1F85},
    {0x1F06,0x0345,0x1F86}, {0x1F07,0x0345,0x1F87}, {0x1F08,0x0300,0x1F0A}, {0x1F08,0x0301,0x1F0C}, {0x1F08,0x0342,0x1F0E}, {0x1F08,0x0345,0x1F88},
    {0x1F09,0x0300,0x1F0B}, {0x1F09,0x0301,0x1F0D}, {0x1F09,0x0342,0x1F0F}, {0x1F09,0x0345,0x1F89}, {0x1F0A,0x0345,0x1F8A}, {0x1F0B,0x0345,0x1F8B},
    {0x1F0C,0x0345,0x1F8C}, {0x1F0D,0x0345,0x1F8D}, {0x1F0E,0x0345,0x1F8E}, {0x1F0F,0x0345,0x1F8F}, {0x1F10,0x0300,0x1F12}, {0x1F10,0x0301,0x1F14},
    {0x1F11,0x0300,0x1F13}, {0x1F11,0x0301,0x1F15}, {0x1F18,0x0300,0x1F1A}, {0x1F18,0x0301,0x1F1C}, {0x1F19,0x0300,0x1F1B}, {0x1F19,0x0301,0x1F1D},
    {0x1F20,0x0300,0x1F22}, {0x1F20,0x0301,0x1F24}, {0x1F20,0x0342,0x1F26}, {0x1F20,0x0345,0x1F90}, {0x1F21,0x0300,0x1F23}, {0x1F21,0x0301,0x1F25},
    {0x1F21,0x0342,0x1F27}, {0x1F21,0x0345,0x1F91}, {0x1F22,0x0345,0x1F92}, {0x1F23,0x0345,0x1F93}, {0x1F24,0x0345,0x1F94}, {0x1F25,0x0345,0x1F95},
    {0x1F26,0x0345,0x1F96}, {0x1F27,0x0345,0x1F97}, {0x1F28,0x0300,0x1F2A}, {0x1F28,0x0301,0x1F2C}, {0x1F28,0x0342,0x1F2E}, {0x1F28,0x0345,0x1F98},
    {0x1F29,0x0300,0x1F2B}, {0x1F29,0x0301,0x1F2D}, {0x1F29,0x0342,0x1F2F}, {0x1F29,0x0345,0x1F99}, {0x1F2A,0x0345,0x1F9A}, {0x1F2B,0x0345,0x1F9B},
    {0x1F2C,0x0345,0x1F9C}, {0x1F2D,0x0345,0x1F9D}, {0x1F2E,0x0345,0x1F9E}, {0x1F2F,0x0345,0x1F9F}, {0x1F30,0x0300,0x1F32}, {0x1F30,0x0301,0x1F34},
    {0x1F30,0x0342,0x1F36}, {0x1F31,0x0300,0x1F33}, {0x1F31,0x0301,0x1F35}, {0x1F31,0x0342,0x1F37}, {0x1F38,0x0300,0x1F3A}, {0x1F38,0x0301,0x1F3C},
    {0x1F38,0x0342,0x1F3E}, {0x1F39,0x0300,0x1F3B}, {0x1F39,0x0301,0x1F3D}, {0x1F39,0x0342,0x1F3F}, {0x1F40,0x0300,0x1F42}, {0x1F40,0x0301,0x1F44},
    {0x1F41,0x0300,0x1F43}, {0x1F41,0x0301,0x1F45}, {0x1F48,0x0300,0x1F4A}, {0x1F48,0x0301,0x1F4C}, {0x1F49,0x0300,0x1F4B}, {0x1F49,0x0301,0x1F4D},
    {0x1F50,0x0300,0x1F52}, {0x1F50,0x0301,0x1F54}, {0x1F50,0x0342,0x1F56}, {0x1F51,0x0300,0x1F53}, {0x1F51,0x0301,0x1F55}, {0x1F51,0x0342,0x1F57},
    {0x1F59,0x0300,0x1F5B}, {0x1F59,0x0301,0x1F5D}, {0x1F59,0x0342,0x1F5F}, {0x1F60,0x0300,0x1F62}, {0x1F60,0x0301,0x1F64}, {0x1F60,0x0342,0x1F66},
    {0x1F60,0x0345,0x1FA0}, {0x1F61,0x0300,0x1F63}, {0x1F61,0x0301,0x1F65}, {0x1F61,0x0342,0x1F67}, {0x1F61,0x0345,0x1FA1}, {0x1F62,0x0345,0x1FA2},
    {0x1F63,0x0345,0x1FA3}, {0x1F64,0x0345,0x1FA4}, {0x1F65,0x0345,0x1FA5}, {0x1F66,0x0345,0x1FA6}, {0x1F67,0x0345,0x1FA7}, {0x1F68,0x0300,0x1F6A},
    {0x1F68,0x0301,0x1F6C}, {0x1F68,0x0342,0x1F6E}, {0x1F68,0x0345,0x1FA8}, {0x1F69,0x0300,0x1F6B}, {0x1F69,0x0301,0x1F6D}, {0x1F69,0x0342,0x1F6F},
    {0x1F69,0x0345,0x1FA9}, {0x1F6A,0x0345,0x1FAA}, {0x1F6B,0x0345,0x1FAB}, {0x1F6C,0x0345,0x1FAC}, {0x1F6D,0x0345,0x1FAD}, {0x1F6E,0x0345,0x1FAE},
    {0x1F6F,0x0345,0x1FAF}, {0x1F70,0x0345,0x1FB2}, {0x1F74,0x0345,0x1FC2}, {0x1F7C,0x0345,0x1FF2}, {0x1FB6,0x0345,0x1FB7}, {0x1FBF,0x0300,0x1FCD},
    {0x1FBF,0x0301,0x1FCE}, {0x1FBF,0x0342,0x1FCF}, {0x1FC6,0x0345,0x1FC7}, {0x1FF6,0x0345,0x1FF7}, {0x1FFE,0x0300,0x1FDD}, {0x1FFE,0x0301,0x1FDE},
    {0x1FFE,0x0342,0x1FDF}, {0x2190,0x0338,0x219A}, {0x2192,0x0338,0x219B}, {0x2194,0x0338,0x21AE}, {0x21D0,0x0338,0x21CD}, {0x21D2,0x0338,0x21CF},
    {0x21D4,0x0338,0x21CE}, {0x2203,0x0338,0x2204}, {0x2208,0x0338,0x2209}, {0x220B,0x0338,0x220C}, {0x2223,0x0338,0x2224}, {0x2225,0x0338,0x2226},
    {0x223C,0x0338,0x2241}, {0x2243,0x0338,0x2244}, {0x2245,0x0338,0x2247}, {0x2248,0x0338,0x2249}, {0x224D,0x0338,0x226D}, {0x2261,0x0338,0x2262},
    {0x2264,0x0338,0x2270}, {0x2265,0x0338,0x2271}, {0x2272,0x0338,0x2274}, {0x2273,0x0338,0x2275}, {0x2276,0x0338,0x2278}, {0x2277,0x0338,0x2279},
    {0x227A,0x0338,0x2280}, {0x227B,0x0338,0x2281}, {0x227C,0x0338,0x22E0}, {0x227D,0x0338,0x22E1}, {0x2282,0x0338,0x2284}, {0x2283,0x0338,0x2285},
    {0x2286,0x0338,0x2288}, {0x2287,0x0338,0x2289}, {0x2291,0x0338,0x22E2}, {0x2292,0x0338,0x22E3}, {0x22A2,0x0338,0x22AC}, {0x22A8,0x0338,0x22AD},
    {0x22A9,0x0338,0x22AE}, {0x22AB,0x0338,0x22AF}, {0x22B2,0x0338,0x22EA}, {0x22B3,0x0338,0x22EB}, {0x22B4,0x0338,0x22EC}, {0x22B5,0x0338,0x22ED},
    {0x3046,0x3099,0x3094}, {0x304B,0x3099,0x304C}, {0x304D,0x3099,0x304E}, {0x304F,0x3099,0x3050}, {0x3051,0x3099,0x3052}, {0x3053,0x3099,0x3054},
    {0x3055,0x3099,0x3056}, {0x3057,0x3099,0x3058}, {0x3059,0x3099,0x305A}, {0x305B,0x3099,0x305C}, {0x305D,0x3099,0x305E}, {0x305F,0x3099,0x3060},
    {0x3061,0x3099,0x3062}, {0x3064,0x3099,0x3065}, {0x3066,0x3099,0x3067}, {0x3068,0x3099,0x3069}, {0x306F,0x3099,0x3070}, {0x306F,0x309A,0x3071},
    {0x3072,0x3099,0x3073}, {0x3072,0x309A,0x3074}, {0x3075,0x3099,0x3076}, {0x3075,0x309A,0x3077}, {0x3078,0x3099,0x3079}, {0x3078,0x309A,0x307A},
    {0x307B,0x3099,0x307C}, {0x307B,0x309A,0x307D}, {0x309D,0x3099,0x309E}, {0x30A6,0x3099,0x30F4}, {0x30AB,0x3099,0x30AC}, {0x30AD,0x3099,0x30AE},
    {0x30AF,0x3099,0x30B0}, {0x30B1,0x3099,0x30B2}, {0x30B3,0x3099,0x30B4}, {0x30B5,0x3099,0x30B6}, {0x30B7,0x3099,0x30B8}, {0x30B9,0x3099,0x30BA},
    {0x30BB,0x3099,0x30BC}, {0x30BD,0x3099,0x30BE}, {0x30BF,0x3099,0x30C0}, {0x30C1,0x3099,0x30C2}, {0x30C4,0x3099,0x30C5}, {0x30C6,0x3099,0x30C7},
    {0x30C8,0x3099,0x30C9}, {0x30CF,0x3099,0x30D0}, {0x30CF,0x309A,0x30D1}, {0x30D2,0x3099,0x30D3}, {0x30D2,0x309A,0x30D4}, {0x30D5,0x3099,0x30D6},
    {0x30D5,0x309A,0x30D7}, {0x30D8,0x3099,0x30D9}, {0x30D8,0x309A,0x30DA}, {0x30DB,0x3099,0x30DC}, {0x30DB,0x309A,0x30DD}, {0x30EF,0x3099,0x30F7},
    {0x30F0,0x3099,0x30F8}, {0x30F1,0x3099,0x30F9}, {0x30F2,0x3099,0x30FA}, {0x30FD,0x3099,0x30FE},
};
inline constexpr uint32_t kComp_size = 928;

inline constexpr MapEntry kLower[] = {
    {0x0041,0x0061}, {0x0042,0x0062}, {0x0043,0x0063}, {0x0044,0x0064}, {0x0045,0x0065}, {0x0046,0x0066},
    {0x0047,0x0067}, {0x0048,0x0068}, {0x0049,0x0069}, {0x004A,0x006A}, {0x004B,0x006B}, {0x004C,0x006C},
    {0x004D,0x006D}, {0x004E,0x006E}, {0x004F,0x006F}, {0x0050,0x0070}, {0x0051,0x0071}, {0x0052,0x0072},
    {0x0053,0x0073}, {0x0054,0x0074}, {0x0055,0x0075}, {0x0056,0x0076}, {0x0057,0x0077}, {0x0058,0x0078},
    {0x0059,0x0079}, {0x005A,0x007A}, {0x00C0,0x00E0}, {0x00C1,0x00E1}, {0x00C2,0x00E2}, {0x00C3,0x00E3},
    {0x00C4,0x00E4}, {0x00C5,0x00E5}, {0x00C6,0x00E6}, {0x00C7,0x00E7}, {0x00C8,0x00E8}, {0x00C9,0x00E9},
    {0x00CA,0x00EA}, {0x00CB,0x00EB}, {0x00CC,0x00EC}, {0x00CD,0x00ED}, {0x00CE,0x00EE}, {0x00CF,0x00EF},
    {0x00D0,0x00F0}, {0x00D1,0x00F1}, {0x00D2,0x00F2}, {0x00D3,0x00F3}, {0x00D4,0x00F4}, {0x00D5,0x00F5},
    {0x00D6,0x00F6}, {0x00D8,0x00F8}, {0x00D9,0x00F9}, {0x00DA,0x00FA}, {0x00DB,0x00FB}, {0x00DC,0x00FC},
    {0x00DD,0x00FD}, {0x00DE,0x00FE}, {0x0100,0x0101}, {0x0102,0x0103}, {0x0104,0x0105}, {0x0106,0x0107},
    {0x0108,0x0109}, {0x010A,0x010B}, {0x010C,0x010D}, {0x010E,0x010F}, {0x0110,0x0111}, {0x0112,0x0113},
    {0x0114,0x0115}, {0x0116,0x0117}, {0x0118,0x0119}, {0x011A,0x011B}, {0x011C,0x011D}, {0x011E,0x011F},
    {0x0120,0x0121}, {0x0122,0x0123}, {0x0124,0x0125}, {0x0126,0x0127}, {0x0128,0x0129}, {0x012A,0x012B},
    {0x012C,0x012D}, {0x012E,0x012F}, {0x0132,0x0133}, {0x0134,0x0135}, {0x0136,0x0137}, {0x0139,0x013A},
    {0x013B,0x013C}, {0x013D,0x013E}, {0x013F,0x0140}, {0x0141,0x0142}, {0x0143,0x0144}, {0x0145,0x0146},
    {0x0147,0x0148}, {0x014A,0x014B}, {0x014C,0x014D}, {0x014E,0x014F}, {0x0150,0x0151}, {0x0152,0x0153},
    {0x0154,0x0155}, {0x0156,0x0157}, {0x0158,0x0159}, {0x015A,0x015B}, {0x015C,0x015D}, {0x015E,0x015F},
    {0x0160,0x0161}, {0x0162,0x0163}, {0x0164,0x0165}, {0x0166,0x0167}, {0x0168,0x0169}, {0x016A,0x016B},
    {0x016C,0x016D}, {0x016E,0x016F}, {0x0170,0x0171}, {0x0172,0x0173}, {0x0174,0x0175}, {0x0176,0x0177},
    {0x0178,0x00FF}, {0x0179,0x017A}, {0x017B,0x017C}, {0x017D,0x017E}, {0x0181,0x0253}, {0x0182,0x0183},
    {0x0184,0x0185}, {0x0186,0x0254}, {0x0187,0x0188}, {0x0189,0x0256}, {0x018A,0x0257}, {0x018B,0x018C},
    {0x018E,0x01DD}, {0x018F,0x0259}, {0x0190,0x025B}, {0x0191,0x0192}, {0x0193,0x0260}, {0x0194,0x0263},
    {0x0196,0x0269}, {0x0197,0x0268}, {0x0198,0x0199}, {0x019C,0x026F}, {0x019D,0x0272}, {0x019F,0x0275},
    {0x01A0,0x01A1}, {0x01A2,0x01A3}, {0x01A4,0x01A5}, {0x01A6,0x0280}, {0x01A7,0x01A8}, {0x01A9,0x0283},
    {0x01AC,0x01AD}, {0x01AE,0x0288}, {0x01AF,0x01B0}, {0x01B1,0x028A}, {0x01B2,0x028B}, {0x01B3,0x01B4},
    {0x01B5,0x01B6}, {0x01B7,0x0292}, {0x01B8,0x01B9}, {0x01BC,0x01BD}, {0x01C4,0x01C6}, {0x01C5,0x01C6},
    {0x01C7,0x01C9}, {0x01C8,0x01C9}, {0x01CA,0x01CC}, {0x01CB,0x01CC}, {0x01CD,0x01CE}, {0x01CF,0x01D0},
    {0x01D1,0x01D2}, {0x01D3,0x01D4}, {0x01D5,0x01D6}, {0x01D7,0x01D8}, {0x01D9,0x01DA}, {0x01DB,0x01DC},
    {0x01DE,0x01DF}, {0x01E0,0x01E1}, {0x01E2,0x01E3}, {0x01E4,0x01E5}, {0x01E6,0x01E7}, {0x01E8,0x01E9},
    {0x01EA,0x01EB}, {0x01EC,0x01ED}, {0x01EE,0x01EF}, {0x01F1,0x01F3}, {0x01F2,0x01F3}, {0x01F4,0x01F5},
    {0x01F6,0x0195}, {0x01F7,0x01BF}, {0x01F8,0x01F9}, {0x01FA,0x01FB}, {0x01FC,0x01FD}, {0x01FE,0x01FF},
    {0x0200,0x0201}, {0x0202,0x0203}, {0x0204,0x0205}, {0x0206,0x0207}, {0x0208,0x0209}, {0x020A,0x020B},
    {0x020C,0x020D}, {0x020E,0x020F}, {0x0210,0x0211}, {0x0212,0x0213}, {0x0214,0x0215}, {0x0216,0x0217},
    {0x0218,0x0219}, {0x021A,0x021B}, {0x021C,0x021D}, {0x021E,0x021F}, {0x0220,0x019E}, {0x0222,0x0223},
    {0x0224,0x0225}, {0x0226,0x0227}, {0x0228,0x0229}, {0x022A,0x022B}, {0x022C,0x022D}, {0x022E,0x022F},
    {0x0230,0x0231}, {0x0232,0x0233}, {0x023A,0x2C65}, {0x023B,0x023C}, {0x023D,0x019A}, {0x023E,0x2C66},
    {0x0241,0x0242}, {0x0243,0x0180}, {0x0244,0x0289}, {0x0245,0x028C}, {0x0246,0x0247}, {0x0248,0x0249},
    {0x024A,0x024B}, {0x024C,0x024D}, {0x024E,0x024F}, {0x0370,0x0371}, {0x0372,0x0373}, {0x0376,0x0377},
    {0x037F,0x03F3}, {0x0386,0x03AC}, {0x0388,0x03AD}, {0x0389,0x03AE}, {0x038A,0x03AF}, {0x038C,0x03CC},
    {0x038E,0x03CD}, {0x038F,0x03CE}, {0x0391,0x03B1}, {0x0392,0x03B2}, {0x0393,0x03B3}, {0x0394,0x03B4},
    {0x0395,0x03B5}, {0x0396,0x03B6}, {0x0397,0x03B7}, {0x0398,0x03B8}, {0x0399,0x03B9}, {0x039A,0x03BA},
    {0x039B,0x03BB}, {0x039C,0x03BC}, {0x039D,0x03BD}, {0x039E,0x03BE}, {0x039F,0x03BF}, {0x03A0,0x03C0},
    {0x03A1,0x03C1}, {0x03A3,0x03C3}, {0x03A4,0x03C4}, {0x03A5,0x03C5}, {0x03A6,0x03C6}, {0x03A7,0x03C7},
    {0x03A8,0x03C8}, {0x03A9,0x03C9}, {0x03AA,0x03CA}, {0x03AB,0x03CB}, {0x03CF,0x03D7}, {0x03D8,0x03D9},
    {0x03DA,0x03DB}, {0x03DC,0x03DD}, {0x03DE,0x03DF}, {0x03E0,0x03E1}, {0x03E2,0x03E3}, {0x03E4,0x03E5},
    {0x03E6,0x03E7}, {0x03E8,0x03E9}, {0x03EA,0x03EB}, {0x03EC,0x03ED}, {0x03EE,0x03EF}, {0x03F4,0x03B8},
    {0x03F7,0x03F8}, {0x03F9,0x03F2}, {0x03FA,0x03FB}, {0x03FD,0x037B}, {0x03FE,0x037C}, {0x03FF,0x037D},
    {0x0400,0x0450}, {0x0401,0x0451}, {0x0402,0x0452}, {0x0403,0x0453}, {0x0404,0x0454}, {0x0405,0x0455},
    {0x0406,0x0456}, {0x0407,0x0457}, {0x0408,0x0458}, {0x0409,0x0459}, {0x040A,0x045A}, {0x040B,0x045B},
    {0x040C,0x045C}, {0x040D,0x045D}, {0x040E,0x045E}, {0x040F,0x045F}, {0x0410,0x0430}, {0x0411,0x0431},
    {0x0412,0x0432}, {0x0413,0x0433}, {0x0414,0x0434}, {0x0415,0x0435}, {0x0416,0x0436}, {0x0417,0x0437},
    {0x0418,0x0438}, {0x0419,0x0439}, {0x041A,0x043A}, {0x041B,0x043B}, {0x041C,0x043C}, {0x041D,0x043D},
    {0x041E,0x043E}, {0x041F,0x043F}, {0x0420,0x0440}, {0x0421,0x0441}, {0x0422,0x0442}, {0x0423,0x0443},
    {0x0424,0x0444}, {0x0425,0x0445}, {0x0426,0x0446}, {0x0427,0x0447}, {0x0428,0x0448}, {0x0429,0x0449},
    {0x042A,0x044A}, {0x042B,0x044B}, {0x042C,0x044C}, {0x042D,0x044D}, {0x042E,0x044E}, {0x042F,0x044F},
    {0x0460,0x0461}, {0x0462,0x0463}, {0x0464,0x0465}, {0x0466,0x0467}, {0x0468,0x0469}, {0x046A,0x046B},
    {0x046C,0x046D}, {0x046E,0x046F}, {0x0470,0x0471}, {0x0472,0x0473}, {0x0474,0x0475}, {0x0476,0x0477},
    {0x0478,0x0479}, {0x047A,0x047B}, {0x047C,0x047D}, {0x047E,0x047F}, {0x0480,0x0481}, {0x048A,0x048B},
    {0x048C,0x048D}, {0x048E,0x048F}, {0x0490,0x0491}, {0x0492,0x0493}, {0x0494,0x0495}, {0x0496,0x0497},
    {0x0498,0x0499}, {0x049A,0x049B}, {0x049C,0x049D}, {0x049E,0x049F}, {0x04A0,0x04A1}, {0x04A2,0x04A3},
    {0x04A4,0x04A5}, {0x04A6,0x04A7}, {0x04A8,0x04A9}, {0x04AA,0x04AB}, {0x04AC,0x04AD}, {0x04AE,0x04AF},
    {0x04B0,0x04B1}, {0x04B2,0x04B3}, {0x04B4,0x04B5}, {0x04B6,0x04B7}, {0x04B8,0x04B9}, {0x04BA,0x04BB},
    {0x04BC,0x04BD}, {0x04BE,0x04BF}, {0x04C0,0x04CF}, {0x04C1,0x04C2}, {0x04C3,0x04C4}, {0x04C5,0x04C6},
    {0x04C7,0x04C8}, {0x04C9,0x04CA}, {0x04CB,0x04CC}, {0x04CD,0x04CE}, {0x04D0,0x04D1}, {0x04D2,0x04D3},
    {0x04D4,0x04D5}, {0x04D6,0x04D7}, {0x04D8,0x04D9}, {0x04DA,0x04DB}, {0x04DC,0x04DD}, {0x04DE,0x04DF},
    {0x04E0,0x04E1}, {0x04E2,0x04E3}, {0x04E4,0x04E5}, {0x04E6,0x04E7}, {0x04E8,0x04E9}, {0x04EA,0x04EB},
    {0x04EC,0x04ED}, {0x04EE,0x04EF}, {0x04F0,0x04F1}, {0x04F2,0x04F3}, {0x04F4,0x04F5}, {0x04F6,0x04F7},
    {0x04F8,0x04F9}, {0x04FA,0x04FB}, {0x04FC,0x04FD}, {0x04FE,0x04FF}, {0x0500,0x0501}, {0x0502,0x0503},
    {0x0504,0x0505}, {0x0506,0x0507}, {0x0508,0x0509}, {0x050A,0x050B}, {0x050C,0x050D}, {0x050E,0x050F},
    {0x0510,0x0511}, {0x0512,0x0513}, {0x0514,0x0515}, {0x0516,0x0517}, {0x0518,0x0519}, {0x051A,0x051B},
    {0x051C,0x051D}, {0x051E,0x051F}, {0x0520,0x0521}, {0x0522,0x0523}, {0x0524,0x0525}, {0x0526,0x0527},
    {0x0528,0x0529}, {0x052A,0x052B}, {0x052C,0x052D}, {0x052E,0x052F}, {0x0531,0x0561}, {0x0532,0x0562},
    {0x0533,0x0563}, {0x0534,0x0564}, {0x0535,0x0565}, {0x0536,0x0566}, {0x0537,0x0567}, {0x0538,0x0568},
    {0x0539,0x0569}, {0x053A,0x056A}, {0x053B,0x056B}, {0x053C,0x056C}, {0x053D,0x056D}, {0x053E,0x056E},
    {0x053F,0x056F}, {0x0540,0x0570}, {0x0541,0x0571}, {0x0542,0x0572}, {0x0543,0x0573}, {0x0544,0x0574},
    {0x0545,0x0575}, {0x0546,0x0576}, {0x0547,0x0577}, {0x0548,0x0578}, {0x0549,0x0579}, {0x054A,0x057A},
    {0x054B,0x057B}, {0x054C,0x057C}, {0x054D,0x057D}, {0x054E,0x057E}, {0x054F,0x057F}, {0x0550,0x0580},
    {0x0551,0x0581}, {0x0552,0x0582}, {0x0553,0x0583}, {0x0554,0x0584}, {0x0555,0x0585}, {0x0556,0x0586},
    {0x10A0,0x2D00}, {0x10A1,0x2D01}, {0x10A2,0x2D02}, {0x10A3,0x2D03}, {0x10A4,0x2D04}, {0x10A5,0x2D05},
    {0x10A6,0x2D06}, {0x10A7,0x2D07}, {0x10A8,0x2D08}, {0x10A9,0x2D09}, {0x10AA,0x2D0A}, {0x10AB,0x2D0B},
    {0x10AC,0x2D0C}, {0x10AD,0x2D0D}, {0x10AE,0x2D0E}, {0x10AF,0x2D0F}, {0x10B0,0x2D10}, {0x10B1,0x2D11},
    {0x10B2,0x2D12}, {0x10B3,0x2D13}, {0x10B4,0x2D14}, {0x10B5,0x2D15}, {0x10B6,0x2D16}, {0x10B7,0x2D17},
    {0x10B8,0x2D18}, {0x10B9,0x2D19}, {0x10BA,0x2D1A}, {0x10BB,0x2D1B}, {0x10BC,0x2D1C}, {0x10BD,0x2D1D},
    {0x10BE,0x2D1E}, {0x10BF,0x2D1F}, {0x10C0,0x2D20}, {0x10C1,0x2D21}, {0x10C2,0x2D22}, {0x10C3,0x2D23},
    {0x10C4,0x2D24}, {0x10C5,0x2D25}, {0x10C7,0x2D27}, {0x10CD,0x2D2D}, {0x13A0,0xAB70}, {0x13A1,0xAB71},
    {0x13A2,0xAB72}, {0x13A3,0xAB73}, {0x13A4,0xAB74}, {0x13A5,0xAB75}, {0x13A6,0xAB76}, {0x13A7,0xAB77},
    {0x13A8,0xAB78}, {0x13A9,0xAB79}, {0x13AA,0xAB7A}, {0x13AB,0xAB7B}, {0x13AC,0xAB7C}, {0x13AD,0xAB7D},
    {0x13AE,0xAB7E}, {0x13AF,0xAB7F}, {0x13B0,0xAB80}, {0x13B1,0xAB81}, {0x13B2,0xAB82}, {0x13B3,0xAB83},
    {0x13B4,0xAB84}, {0x13B5,0xAB85}, {0x13B6,0xAB86}, {0x13B7,0xAB87}, {0x13B8,0xAB88}, {0x13B9,0xAB89},
    {0x13BA,0xAB8A}, {0x13BB,0xAB8B}, {0x13BC,0xAB8C}, {0x13BD,0xAB8D}, {0x13BE,0xAB8E}, {0x13BF,0xAB8F},
    {0x13C0,0xAB90}, {0x13C1,0xAB91}, {0x13C2,0xAB92}, {0x13C3,0xAB93}, {0x13C4,0xAB94}, {0x13C5,0xAB95},
    {0x13C6,0xAB96}, {0x13C7,0xAB97}, {0x13C8,0xAB98}, {0x13C9,0xAB99}, {0x13CA,0xAB9A}, {0x13CB,0xAB9B},
    {0x13CC,0xAB9C}, {0x13CD,0xAB9D}, {0x13CE,0xAB9E}, {0x13CF,0xAB9F}, {0x13D0,0xABA0}, {0x13D1,0xABA1},
    {0x13D2,0xABA2}, {0x13D3,0xABA3}, {0x13D4,0xABA4}, {0x13D5,0xABA5}, {0x13D6,0xABA6}, {0x13D7,0xABA7},
    {0x13D8,0xABA8}, {0x13D9,0xABA9}, {0x13DA,0xABAA}, {0x13DB,0xABAB}, {0x13DC,0xABAC}, {0x13DD,0xABAD},
    {0x13DE,0xABAE}, {0x13DF,0xABAF}, {0x13E0,0xABB0}, {0x13E1,0xABB1}, {0x13E2,0xABB2}, {0x13E3,0xABB3},
    {0x13E4,0xABB4}, {0x13E5,0xABB5}, {0x13E6,0xABB6}, {0x13E7,0xABB7}, {0x13E8,0xABB8}, {0x13E9,0xABB9},
    {0x13EA,0xABBA}, {0x13EB,0xABBB}, {0x13EC,0xABBC}, {0x13ED,0xABBD}, {0x13EE,0xABBE}, {0x13EF,0xABBF},
    {0x13F0,0x13F8}, {0x13F1,0x13F9}, {0x13F2,0x13FA}, {0x13F3,0x13FB}, {0x13F4,0x13FC}, {0x13F5,0x13FD},
    {0x1C90,0x10D0}, {0x1C91,0x10D1}, {0x1C92,0x10D2}, {0x1C93,0x10D3}, {0x1C94,0x10D4}, {0x1C95,0x10D5},
    {0x1C96,0x10D6}, {0x1C97,0x10D7}, {0x1C98,0x10D8}, {0x1C99,0x10D9}, {0x1C9A,0x10DA}, {0x1C9B,0x10DB},
    {0x1C9C,0x10DC}, {0x1C9D,0x10DD}, {0x1C9E,0x10DE}, {0x1C9F,0x10DF}, {0x1CA0,0x10E0}, {0x1CA1,0x10E1},
    {0x1CA2,0x10E2}, {0x1CA3,0x10E3}, {0x1CA4,0x10E4}, {0x1CA5,0x10E5}, {0x1CA6,0x10E6}, {0x1CA7,0x10E7},
    {0x1CA8,0x10E8}, {0x1CA9,0x10E9}, {0x1CAA,0x10EA}, {0x1CAB,0x10EB}, {0x1CAC,0x10EC}, {0x1CAD,0x10ED},
    {0x1CAE,0x10EE}, {0x1CAF,0x10EF}, {0x1CB0,0x10F0}, {0x1CB1,0x10F1}, {0x1CB2,0x10F2}, {0x1CB3,0x10F3},
    {0x1CB4,0x10F4}, {0x1CB5,0x10F5}, {0x1CB6,0x10F6}, {0x1CB7,0x10F7}, {0x1CB8,0x10F8}, {0x1CB9,0x10F9},
    {0x1CBA,0x10FA}, {0x1CBD,0x10FD}, {0x1CBE,0x10FE}, {0x1CBF,0x10FF}, {0x1E00,0x1E01}, {0x1E02,0x1E03},
    {0x1E04,0x1E05}, {0x1E06,0x1E07}, {0x1E08,0x1E09}, {0x1E0A,0x1E0B}, {0x1E0C,0x1E0D}, {0x1E0E,0x1E0F},
    {0x1E10,0x1E11}, {0x1E12,0x1E13}, {0x1E14,0x1E15}, {0x1E16,0x1E17}, {0x1E18,0x1E19}, {0x1E1A,0x1E1B},
    {0x1E1C,0x1E1D}, {0x1E1E,0x1E1F}, {0x1E20,0x1E21}, {0x1E22,0x1E23}, {0x1E24,0x1E25}, {0x1E26,0x1E27},
    {0x1E28,0x1E29}, {0x1E2A,0x1E2B}, {0x1E2C,0x1E2D}, {0x1E2E,0x1E2F}, {0x1E30,0x1E31}, {0x1E32,0x1E33},
    {0x1E34,0x1E35}, {0x1E36,0x1E37}, {0x1E38,0x1E39}, {0x1E3A,0x1E3B}, {0x1E3C,0x1E3D}, {0x1E3E,0x1E3F},
    {0x1E40,0x1E41}, {0x1E42,0x1E43}, {0x1E44,0x1E45}, {0x1E46,0x1E47}, {0x1E48,0x1E49}, {0x1E4A,0x1E4B},
    {0x1E4C,0x1E4D}, {0x1E4E,0x1E4F}, {0x1E50,0x1E51}, {0x1E52,0x1E53}, {0x1E54,0x1E55}, {0x1E56,0x1E57},
    {0x1E58,0x1E59}, {0x1E5A,0x1E5B}, {0x1E5C,0x1E5D}, {0x1E5E,0x1E5F}, {0x1E60,0x1E61}, {0x1E62,0x1E63},
    {0x1E64,0x1E65}, {0x1E66,0x1E67}, {0x1E68,0x1E69}, {0x1E6A,0x1E6B}, {0x1E6C,0x1E6D}, {0x1E6E,0x1E6F},
    {0x1E70,0x1E71}, {0x1E72,0x1E73}, {0x1E74,0x1E75}, {0x1E76,0x1E77}, {0x1E78,0x1E79}, {0x1E7A,0x1E7B},
    {0x1E7C,0x1E7D}, {0x1E7E,0x1E7F}, {0x1E80,0x1E81}, {0x1E82,0x1E83}, {0x1E84,0x1E85}, {0x1E86,0x1E87},
    {0x1E88,0x1E89}, {0x1E8A,0x1E8B}, {0x1E8C,0x1E8D}, {0x1E8E,0x1E8F}, {0x1E90,0x1E91}, {0x1E92,0x1E93},
    {0x1E94,0x1E95}, {0x1E9E,0x00DF}, {0x1EA0,0x1EA1}, {0x1EA2,0x1EA3}, {0x1EA4,0x1EA5}, {0x1EA6,0x1EA7},
    {0x1EA8,0x1EA9}, {0x1EAA,0x1EAB}, {0x1EAC,0x1EAD}, {0x1EAE,0x1EAF}, {0x1EB0,0x1EB1}, {0x1EB2,0x1EB3},
    {0x1EB4,0x1EB5}, {0x1EB6,0x1EB7}, {0x1EB8,0x1EB9}, {0x1EBA,0x1EBB}, {0x1EBC,0x1EBD}, {0x1EBE,0x1EBF},
    {0x1EC0,0x1EC1}, {0x1EC2,0x1EC3}, {0x1EC4,0x1EC5}, {0x1EC6,0x1EC7}, {0x1EC8,0x1EC9}, {0x1ECA,0x1ECB},
    {0x1ECC,0x1ECD}, {0x1ECE,0x1ECF}, {0x1ED0,0x1ED1}, {0x1ED2,0x1ED3}, {0x1ED4,0x1ED5}, {0x1ED6,0x1ED7},
    {0x1ED8,0x1ED9}, {0x1EDA,0x1EDB}, {0x1EDC,0x1EDD}, {0x1EDE,0x1EDF}, {0x1EE0,0x1EE1}, {0x1EE2,0x1EE3},
    {0x1EE4,0x1EE5}, {0x1EE6,0x1EE7}, {0x1EE8,0x1EE9}, {0x1EEA,0x1EEB}, {0x1EEC,0x1EED}, {0x1EEE,0x1EEF},
    {0x1EF0,0x1EF1}, {0x1EF2,0x1EF3}, {0x1EF4,0x1EF5}, {0x1EF6,0x1EF7}, {0x1EF8,0x1EF9}, {0x1EFA,0x1EFB},
    {0x1EFC,0x1EFD}, {0x1EFE,0x1EFF}, {0x1F08,0x1F00}, {0x1F09,0x1F01}, {0x1F0A,0x1F02}, {0x1F0B,0x1F03},
    {0x1F0C,0x1F04}, {0x1F0D,0x1F05}, {0x1F0E,0x1F06}, {0x1F0F,0x1F07}, {0x1F18,0x1F10}, {0x1F19,0x1F11},
    {0x1F1A,0x1F12}, {0x1F1B,0x1F13}, {0x1F1C,0x1F14}, {0x1F1D,0x1F15}, {0x1F28,0x1F20}, {0x1F29,0x1F21},
    {0x1F2A,0x1F22}, {0x1F2B,0x1F23}, {0x1F2C,0x1F24}, {0x1F2D,0x1F25}, {0x1F2E,0x1F26}, {0x1F2F,0x1F27},
    {0x1F38,0x1F30}, {0x1F39,0x1F31}, {0x1F3A,0x1F32}, {0x1F3B,0x1F33}, {0x1F3C,0x1F34}, {0x1F3D,0x1F35},
    {0x1F3E,0x1F36}, {0x1F3F,0x1F37}, {0x1F48,0x1F40}, {0x1F49,0x1F41}, {0x1F4A,0x1F42}, {0x1F4B,0x1F43},
    {0x1F4C,0x1F44}, {0x1F4D,0x1F45}, {0x1F59,0x1F51}, {0x1F5B,0x1F53}, {0x1F5D,0x1F55}, {0x1F5F,0x1F57},
    {0x1F68,0x1F60}, {0x1F69,0x1F61}, {0x1F6A,0x1F62}, {0x1F6B,0x1F63}, {0x1F6C,0x1F64}, {0x1F6D,0x1F65},
    {0x1F6E,0x1F66}, {0x1F6F,0x1F67}, {0x1F88,0x1F80}, {0x1F89,0x1F81}, {0x1F8A,0x1F82}, {0x1F8B,0x1F83},
    {0x1F8C,0x1F84}, {0x1F8D,0x1F85}, {0x1F8E,0x1F86}, {0x1F8F,0x1F87}, {0x1F98,0x1F90}, {0x1F99,0x1F91},
    {0x1F9A,0x1F92}, {0x1F9B,0x1F93}, {0x1F9C,0x1F94}, {0x1F9D,0x1F95}, {0x1F9E,0x1F96}, {0x1F9F,0x1F97},
    {0x1FA8,0x1FA0}, {0x1FA9,0x1FA1}, {0x1FAA,0x1FA2}, {0x1FAB,0x1FA3}, {0x1FAC,0x1FA4}, {0x1FAD,0x1FA5},
    {0x1FAE,0x1FA6}, {0x1FAF,0x1FA7}, {0x1FB8,0x1FB0}, {0x1FB9,0x1FB1}, {0x1FBA,0x1F70}, {0x1FBB,0x1F71},
    {0x1FBC,0x1FB3}, {0x1FC8,0x1F72}, {0x1FC9,0x1F73}, {0x1FCA,0x1F74}, {0x1FCB,0x1F75}, {0x1FCC,0x1FC3},
    {0x1FD8,0x1FD0}, {0x1FD9,0x1FD1}, {0x1FDA,0x1F76}, {0x1FDB,0x1F77}, {0x1FE8,0x1FE0}, {0x1FE9,0x1FE1},
    {0x1FEA,0x1F7A}, {0x1FEB,0x1F7B}, {0x1FEC,0x1FE5}, {0x1FF8,0x1F78}, {0x1FF9,0x1F79}, {0x1FFA,0x1F7C},
    {0x1FFB,0x1F7D}, {0x1FFC,0x1FF3}, {0x2126,0x03C9}, {0x212A,0x006B}, {0x212B,0x00E5}, {0x2132,0x214E},
    {0x2160,0x2170}, {0x2161,0x2171}, {0x2162,0x2172}, {0x2163,0x2173}, {0x2164,0x2174}, {0x2165,0x2175},
    {0x2166,0x2176}, {0x2167,0x2177}, {0x2168,0x2178}, {0x2169,0x2179}, {0x216A,0x217A}, {0x216B,0x217B},
    {0x216C,0x217C}, {0x216D,0x217D}, {0x216E,0x217E}, {0x216F,0x217F}, {0x2183,0x2184}, {0x24B6,0x24D0},
    {0x24B7,0x24D1}, {0x24B8,0x24D2}, {0x24B9,0x24D3}, {0x24BA,0x24D4}, {0x24BB,0x24D5}, {0x24BC,0x24D6},
    {0x24BD,0x24D7}, {0x24BE,0x24D8}, {0x24BF,0x24D9}, {0x24C0,0x24DA}, {0x24C1,0x24DB}, {0x24C2,0x24DC},
    {0x24C3,0x24DD}, {0x24C4,0x24DE}, {0x24C5,0x24DF}, {0x24C6,0x24E0}, {0x24C7,0x24E1}, {0x24C8,0x24E2},
    {0x24C9,0x24E3}, {0x24CA,0x24E4}, {0x24CB,0x24E5}, {0x24CC,0x24E6}, {0x24CD,0x24E7}, {0x24CE,0x24E8},
    {0x24CF,0x24E9}, {0x2C00,0x2C30}, {0x2C01,0x2C31}, {0x2C02,0x2C32}, {0x2C03,0x2C33}, {0x2C04,0x2C34},
    {0x2C05,0x2C35}, {0x2C06,0x2C36}, {0x2C07,0x2C37}, {0x2C08,0x2C38}, {0x2C09,0x2C39}, {0x2C0A,0x2C3A},
    {0x2C0B,0x2C3B}, {0x2C0C,0x2C3C}, {0x2C0D,0x2C3D}, {0x2C0E,0x2C3E}, {0x2C0F,0x2C3F}, {0x2C10,0x2C40},
    {0x2C11,0x2C41}, {0x2C12,0x2C42}, {0x2C13,0x2C43}, {0x2C14,0x2C44}, {0x2C15,0x2C45}, {0x2C16,0x2C46},
    {0x2C17,0x2C47}, {0x2C18,0x2C48}, {0x2C19,0x2C49}, {0x2C1A,0x2C4A}, {0x2C1B,0x2C4B}, {0x2C1C,0x2C4C},
    {0x2C1D,0x2C4D}, {0x2C1E,0x2C4E}, {0x2C1F,0x2C4F}, {0x2C20,0x2C50}, {0x2C21,0x2C51}, {0x2C22,0x2C52},
    {0x2C23,0x2C53}, {0x2C24,0x2C54}, {0x2C25,0x2C55}, {0x2C26,0x2C56}, {0x2C27,0x2C57}, {0x2C28,0x2C58},
    {0x2C29,0x2C59}, {0x2C2A,0x2C5A}, {0x2C2B,0x2C5B}, {0x2C2C,0x2C5C}, {0x2C2D,0x2C5D}, {0x2C2E,0x2C5E},
    {0x2C60,0x2C61}, {0x2C62,0x026B}, {0x2C63,0x1D7D}, {0x2C64,0x027D}, {0x2C67,0x2C68}, {0x2C69,0x2C6A},
    {0x2C6B,0x2C6C}, {0x2C6D,0x0251}, {0x2C6E,0x0271}, {0x2C6F,0x0250}, {0x2C70,0x0252}, {0x2C72,0x2C73},
    {0x2C75,0x2C76}, {0x2C7E,0x023F}, {0x2C7F,0x0240}, {0x2C80,0x2C81}, {0x2C82,0x2C83}, {0x2C84,0x2C85},
    {0x2C86,0x2C87}, {0x2C88,0x2C89}, {0x2C8A,0x2C8B}, {0x2C8C,0x2C8D}, {0x2C8E,0x2C8F}, {0x2C90,0x2C91},
    {0x2C92,0x2C93}, {0x2C94,0x2C95}, {0x2C96,0x2C97}, {0x2C98,0x2C99}, {0x2C9A,0x2C9B}, {0x2C9C,0x2C9D},
    {0x2C9E,0x2C9F}, {0x2CA0,0x2CA1}, {0x2CA2,0x2CA3}, {0x2CA4,0x2CA5}, {0x2CA6,0x2CA7}, {0x2CA8,0x2CA9},
    {0x2CAA,0x2CAB}, {0x2CAC,0x2CAD}, {0x2CAE,0x2CAF}, {0x2CB0,0x2CB1}, {0x2CB2,0x2CB3}, {0x2CB4,0x2CB5},
    {0x2CB6,0x2CB7}, {0x2CB8,0x2CB9}, {0x2CBA,0x2CBB}, {0x2CBC,0x2CBD}, {0x2CBE,0x2CBF}, {0x2CC0,0x2CC1},
    {0x2CC2,0x2CC3}, {0x2CC4,0x2CC5}, {0x2CC6,0x2CC7}, {0x2CC8,0x2CC9}, {0x2CCA,0x2CCB}, {0x2CCC,0x2CCD},
    {0x2CCE,0x2CCF}, {0x2CD0,0x2CD1}, {0x2CD2,0x2CD3}, {0x2CD4,0x2CD5}, {0x2CD6,0x2CD7}, {0x2CD8,0x2CD9},
    {0x2CDA,0x2CDB}, {0x2CDC,0x2CDD}, {0x2CDE,0x2CDF}, {0x2CE0,0x2CE1}, {0x2CE2,0x2CE3}, {0x2CEB,0x2CEC},
    {0x2CED,0x2CEE}, {0x2CF2,0x2CF3}, {0xA640,0xA641}, {0xA642,0xA643}, {0xA644,0xA645}, {0xA646,0xA647},
    {0xA648,0xA649}, {0xA64A,0xA64B}, {0xA64C,0xA64D}, {0xA64E,0xA64F}, {0xA650,0xA651}, {0xA652,0xA653},
    {0xA654,0xA655}, {0xA656,0xA657}, {0xA658,0xA659}, {0xA65A,0xA65B}, {0xA65C,0xA65D}, {0xA65E,0xA65F},
    {0xA660,0xA661}, {0xA662,0xA663}, {0xA664,0xA665}, {0xA666,0xA667}, {0xA668,0xA669}, {0xA66A,0xA66B},
    {0xA66C,0xA66D}, {0xA680,0xA681}, {0xA682,0xA683}, {0xA684,0xA685}, {0xA686,0xA687}, {0xA688,0xA689},
    {0xA68A,0xA68B}, {0xA68C,0xA68D}, {0xA68E,0xA68F}, {0xA690,0xA691}, {0xA692,0xA693}, {0xA694,0xA695},
    {0xA696,0xA697}, {0xA698,0xA699}, {0xA69A,0xA69B}, {0xA722,0xA723}, {0xA724,0xA725}, {0xA726,0xA727},
    {0xA728,0xA729}, {0xA72A,0xA72B}, {0xA72C,0xA72D}, {0xA72E,0xA72F}, {0xA732,0xA733}, {0xA734,0xA735},
    {0xA736,0xA737}, {0xA738,0xA739}, {0xA73A,0xA73B}, {0xA73C,0xA73D}, {0xA73E,0xA73F}, {0xA740,0xA741},
    {0xA742,0xA743}, {0xA744,0xA745}, {0xA746,0xA747}, {0xA748,0xA749}, {0xA74A,0xA74B}, {0xA74C,0xA74D},
    {0xA74E,0xA74F}, {0xA750,0xA751}, {0xA752,0xA753}, {0xA754,0xA755}, {0xA756,0xA757}, {0xA758,0xA759},
    {0xA75A,0xA75B}, {0xA75C,0xA75D}, {0xA75E,0xA75F}, {0xA760,0xA761}, {0xA762,0xA763}, {0xA764,0xA765},
    {0xA766,0xA767}, {0xA768,0xA769}, {0xA76A,0xA76B}, {0xA76C,0xA76D}, {0xA76E,0xA76F}, {0xA779,0xA77A},
    {0xA77B,0xA77C}, {0xA77D,0x1D79}, {0xA77E,0xA77F}, {0xA780,0xA781}, {0xA782,0xA783}, {0xA784,0xA785},
    {0xA786,0xA787}, {0xA78B,0xA78C}, {0xA78D,0x0265}, {0xA790,0xA791}, {0xA792,0xA793}, {0xA796,0xA797},
    {0xA798,0xA799}, {0xA79A,0xA79B}, {0xA79C,0xA79D}, {0xA79E,0xA79F}, {0xA7A0,0xA7A1}, {0xA7A2,0xA7A3},
    {0xA7A4,0xA7A5}, {0xA7A6,0xA7A7}, {0xA7A8,0xA7A9}, {0xA7AA,0x0266}, {0xA7AB,0x025C}, {0xA7AC,0x0261},
    {0xA7AD,0x026C}, {0xA7AE,0x026A}, {0xA7B0,0x029E}, {0xA7B1,0x0287}, {0xA7B2,0x029D}, {0xA7B3,0xAB53},
    {0xA7B4,0xA7B5}, {0xA7B6,0xA7B7}, {0xA7B8,0xA7B9}, {0xA7BA,0xA7BB}, {0xA7BC,0xA7BD}, {0xA7BE,0xA7BF},
    {0xA7C2,0xA7C3}, {0xA7C4,0xA794}, {0xA7C5,0x0282}, {0xA7C6,0x1D8E}, {0xA7C7,0xA7C8}, {0xA7C9,0xA7CA},
    {0xA7F5,0xA7F6}, {0xFF21,0xFF41}, {0xFF22,0xFF42}, {0xFF23,0xFF43}, {0xFF24,0xFF44}, {0xFF25,0xFF45},
    {0xFF26,0xFF46}, {0xFF27,0xFF47}, {0xFF28,0xFF48}, {0xFF29,0xFF49}, {0xFF2A,0xFF4A}, {0xFF2B,0xFF4B},
    {0xFF2C,0xFF4C}, {0xFF2D,0xFF4D}, {0xFF2E,0xFF4E}, {0xFF2F,0xFF4F}, {0xFF30,0xFF50}, {0xFF31,0xFF51},
    {0xFF32,0xFF52}, {0xFF33,0xFF53}, {0xFF34,0xFF54}, {0xFF35,0xFF55}, {0xFF36,0xFF56}, {0xFF37,0xFF57},
    {0xFF38,0xFF58}, {0xFF39,0xFF59}, {0xFF3A,0xFF5A},
};
inline constexpr uint32_t kLower_size = 1167;

inline constexpr Range kPunctRanges[] = {
    {0x0021,0x002F}, {0x003A,0x0040}, {0x005B,0x0060}, {0x007B,0x007E}, {0x00A1,0x00A9}, {0x00AB,0x00AC},
    {0x00AE,0x00B1}, {0x00B4,0x00B4}, {0x00B6,0x00B8}, {0x00BB,0x00BB}, {0x00BF,0x00BF}, {0x00D7,0x00D7},
    {0x00F7,0x00F7}, {0x02C2,0x02C5}, {0x02D2,0x02DF}, {0x02E5,0x02EB}, {0x02ED,0x02ED}, {0x02EF,0x02FF},
    {0x0375,0x0375}, {0x037E,0x037E}, {0x0384,0x0385}, {0x0387,0x0387}, {0x03F6,0x03F6}, {0x0482,0x0482},
    {0x055A,0x055F}, {0x0589,0x058A}, {0x058D,0x058F}, {0x05BE,0x05BE}, {0x05C0,0x05C0}, {0x05C3,0x05C3},
    {0x05C6,0x05C6}, {0x05F3,0x05F4}, {0x0606,0x060F}, {0x061B,0x061B}, {0x061E,0x061F}, {0x066A,0x066D},
    {0x06D4,0x06D4}, {0x06DE,0x06DE}, {0x06E9,0x06E9}, {0x06FD,0x06FE}, {0x0700,0x070D}, {0x07F6,0x07F9},
    {0x07FE,0x07FF}, {0x0830,0x083E}, {0x085E,0x085E}, {0x0964,0x0965}, {0x0970,0x0970}, {0x09F2,0x09F3},
    {0x09FA,0x09FB}, {0x09FD,0x09FD}, {0x0A76,0x0A76}, {0x0AF0,0x0AF1}, {0x0B70,0x0B70}, {0x0BF3,0x0BFA},
    {0x0C77,0x0C77}, {0x0C7F,0x0C7F}, {0x0C84,0x0C84}, {0x0D4F,0x0D4F}, {0x0D79,0x0D79}, {0x0DF4,0x0DF4},
    {0x0E3F,0x0E3F}, {0x0E4F,0x0E4F}, {0x0E5A,0x0E5B}, {0x0F01,0x0F17}, {0x0F1A,0x0F1F}, {0x0F34,0x0F34},
    {0x0F36,0x0F36}, {0x0F38,0x0F38}, {0x0F3A,0x0F3D}, {0x0F85,0x0F85}, {0x0FBE,0x0FC5}, {0x0FC7,0x0FCC},
    {0x0FCE,0x0FDA}, {0x104A,0x104F}, {0x109E,0x109F}, {0x10FB,0x10FB}, {0x1360,0x1368}, {0x1390,0x1399},
    {0x1400,0x1400}, {0x166D,0x166E}, {0x169B,0x169C}, {0x16EB,0x16ED}, {0x1735,0x1736}, {0x17D4,0x17D6},
    {0x17D8,0x17DB}, {0x1800,0x180A}, {0x1940,0x1940}, {0x1944,0x1945}, {0x19DE,0x19FF}, {0x1A1E,0x1A1F},
    {0x1AA0,0x1AA6}, {0x1AA8,0x1AAD}, {0x1B5A,0x1B6A}, {0x1B74,0x1B7C}, {0x1BFC,0x1BFF}, {0x1C3B,0x1C3F},
    {0x1C7E,0x1C7F}, {0x1CC0,0x1CC7}, {0x1CD3,0x1CD3}, {0x1FBD,0x1FBD}, {0x1FBF,0x1FC1}, {0x1FCD,0x1FCF},
    {0x1FDD,0x1FDF}, {0x1FED,0x1FEF}, {0x1FFD,0x1FFE}, {0x2010,0x2027}, {0x2030,0x205E}, {0x207A,0x207E},
    {0x208A,0x208E}, {0x20A0,0x20BF}, {0x2100,0x2101}, {0x2103,0x2106}, {0x2108,0x2109}, {0x2114,0x2114},
    {0x2116,0x2118}, {0x211E,0x2123}, {0x2125,0x2125}, {0x2127,0x2127}, {0x2129,0x2129}, {0x212E,0x212E},
    {0x213A,0x213B}, {0x2140,0x2144}, {0x214A,0x214D}, {0x214F,0x214F}, {0x218A,0x218B}, {0x2190,0x2426},
    {0x2440,0x244A}, {0x249C,0x24E9}, {0x2500,0x2775}, {0x2794,0x2B73}, {0x2B76,0x2B95}, {0x2B97,0x2BFF},
    {0x2CE5,0x2CEA}, {0x2CF9,0x2CFC}, {0x2CFE,0x2CFF}, {0x2D70,0x2D70}, {0x2E00,0x2E2E}, {0x2E30,0x2E52},
    {0x2E80,0x2E99}, {0x2E9B,0x2EF3}, {0x2F00,0x2FD5}, {0x2FF0,0x2FFB}, {0x3001,0x3004}, {0x3008,0x3020},
    {0x3030,0x3030}, {0x3036,0x3037}, {0x303D,0x303F}, {0x309B,0x309C}, {0x30A0,0x30A0}, {0x30FB,0x30FB},
    {0x3190,0x3191}, {0x3196,0x319F}, {0x31C0,0x31E3}, {0x3200,0x321E}, {0x322A,0x3247}, {0x3250,0x3250},
    {0x3260,0x327F}, {0x328A,0x32B0}, {0x32C0,0x33FF}, {0x4DC0,0x4DFF}, {0xA490,0xA4C6}, {0xA4FE,0xA4FF},
    {0xA60D,0xA60F}, {0xA673,0xA673}, {0xA67E,0xA67E}, {0xA6F2,0xA6F7}, {0xA700,0xA716}, {0xA720,0xA721},
    {0xA789,0xA78A}, {0xA828,0xA82B}, {0xA836,0xA839}, {0xA874,0xA877}, {0xA8CE,0xA8CF}, {0xA8F8,0xA8FA},
    {0xA8FC,0xA8FC}, {0xA92E,0xA92F}, {0xA95F,0xA95F}, {0xA9C1,0xA9CD}, {0xA9DE,0xA9DF}, {0xAA5C,0xAA5F},
    {0xAA77,0xAA79}, {0xAADE,0xAADF}, {0xAAF0,0xAAF1}, {0xAB5B,0xAB5B}, {0xAB6A,0xAB6B}, {0xABEB,0xABEB},
    {0xFB29,0xFB29}, {0xFBB2,0xFBC1}, {0xFD3E,0xFD3F}, {0xFDFC,0xFDFD}, {0xFE10,0xFE19}, {0xFE30,0xFE52},
    {0xFE54,0xFE66}, {0xFE68,0xFE6B}, {0xFF01,0xFF0F}, {0xFF1A,0xFF20}, {0xFF3B,0xFF40}, {0xFF5B,0xFF65},
    {0xFFE0,0xFFE6}, {0xFFE8,0xFFEE}, {0xFFFC,0xFFFD},
};
inline constexpr uint32_t kPunctRanges_size = 201;

inline constexpr Range kSpaceRanges[] = {
    {0x0020,0x0020}, {0x00A0,0x00A0}, {0x1680,0x1680}, {0x2000,0x200A}, {0x2028,0x2029}, {0x202F,0x202F},
    {0x205F,0x205F}, {0x3000,0x3000},
};
inline constexpr uint32_t kSpaceRanges_size = 8;

}  // namespace halknob::unicode_data
