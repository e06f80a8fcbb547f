/** Minimal PCM16 WAV encoder, used by tests to fabricate uploads. */

export function encodeWavPcm16(
  sampleRate: number,
  channels: Int16Array[],
): Uint8Array {
  const numChannels = channels.length;
  if (numChannels < 1) throw new Error("at least one channel required");
  const frames = channels[0].length;
  if (channels.some((c) => c.length !== frames)) {
    throw new Error("all channels must have equal length");
  }
  const blockAlign = numChannels * 2;
  const dataSize = frames * blockAlign;
  const buffer = new ArrayBuffer(44 + dataSize);
  const view = new DataView(buffer);
  const ascii = (offset: number, text: string) => {
    for (let i = 0; i < text.length; i++) view.setUint8(offset + i, text.charCodeAt(i));
  };

  ascii(0, "RIFF");
  view.setUint32(4, 36 + dataSize, true);
  ascii(8, "WAVE");
  ascii(12, "fmt ");
  view.setUint32(16, 16, true);
  view.setUint16(20, 1, true); // PCM
  view.setUint16(22, numChannels, true);
  view.setUint32(24, sampleRate, true);
  view.setUint32(28, sampleRate * blockAlign, true);
  view.setUint16(32, blockAlign, true);
  view.setUint16(34, 16, true);
  ascii(36, "data");
  view.setUint32(40, dataSize, true);

  let offset = 44;
  for (let frame = 0; frame < frames; frame++) {
    for (const channel of channels) {
      view.setInt16(offset, channel[frame], true);
      offset += 2;
    }
  }
  return new Uint8Array(buffer);
}

export function silentWav(sampleRate: number, seconds: number): Uint8Array {
  return encodeWavPcm16(sampleRate, [new Int16Array(Math.round(sampleRate * seconds))]);
}
