export { Agent, EchoAgent, BUILTIN_AGENTS } from "./agent";
export { BackendHost } from "./host";
export { TestClient, decodedPayload } from "./client";
export {
  Frame,
  MsgType,
  crc32,
  decodeFrame,
  decodeHeader,
  encodeFrame,
  frame,
  FLAG_BATCHED,
  FLAG_COMPRESSED_IMAGES,
  HEADER_SIZE,
  TRAILER_SIZE,
  IntegrityError,
  ProtocolError,
  FrameTooLarge,
} from "./frame";
export {
  CompressedImage,
  DecodingError,
  EncodingError,
  NdArray,
  Value,
  ValueMap,
  decodeValue,
  encodeValue,
  valuesEqual,
  vmap,
} from "./value";
export { Act, Obs, decodeObs, decompressImage, encodeAct, obsBatchSize, zerosF32 } from "./messages";
export {
  TypedJson,
  VectorFile,
  bytesToHex,
  hexToBytes,
  jsonableToValue,
  loadVectors,
} from "./conformance";
